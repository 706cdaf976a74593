pub mod combs;
pub mod devices;
pub mod error;
pub mod frames;
pub mod harness;
pub mod operator;
pub mod optimal_tester;
pub mod processing;

pub use error::{Error, Result};
pub use frames::{DualFrame, Povm};
pub use operator::{Operator, C64};
