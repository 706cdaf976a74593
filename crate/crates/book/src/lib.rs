//! Compiles the guide chapters as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/operators.md")]
pub mod operators {}

#[doc = include_str!("../../../book/src/frames.md")]
pub mod frames {}

#[doc = include_str!("../../../book/src/optimal-processing.md")]
pub mod optimal_processing {}

#[doc = include_str!("../../../book/src/maxlik-noise.md")]
pub mod maxlik_noise {}

#[doc = include_str!("../../../book/src/devices.md")]
pub mod devices {}

#[doc = include_str!("../../../book/src/combs-testers.md")]
pub mod combs_testers {}

#[doc = include_str!("../../../book/src/optimal-testers.md")]
pub mod optimal_testers {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
