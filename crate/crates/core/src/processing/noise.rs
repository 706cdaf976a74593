//! Estimators for measurements degraded by known noise, and the qubit
//! closed forms.

use crate::devices::ChoiOperator;
use crate::error::{Error, Result};
use crate::frames::{DualFrame, Povm};
use crate::operator::{apply_superoperator, moore_penrose, pauli, Operator, C64};

use super::Coefficients;

/// Which map a Choi operator represents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Picture {
    /// The map acting on states.
    #[default]
    Schrodinger,
    /// Its adjoint, acting on observables.
    Heisenberg,
}

fn schrodinger_superop(noise: &ChoiOperator, picture: Picture) -> Operator {
    let s = noise.superoperator();
    match picture {
        Picture::Schrodinger => s,
        Picture::Heisenberg => s.adjoint(),
    }
}

/// POVM actually realized when states pass through `noise` before the
/// measurement `{P_l}`: elements `N_*(P_l)`.
pub fn noisy_povm(povm: &Povm, noise: &ChoiOperator, picture: Picture) -> Result<Povm> {
    let d = povm.dim();
    if noise.d_in() != d || noise.d_out() != d {
        return Err(Error::Shape(format!("noise {}→{} for a POVM on {d}", noise.d_in(), noise.d_out())));
    }
    let heis = schrodinger_superop(noise, picture).adjoint();
    let elements = povm
        .elements()
        .iter()
        .map(|p| apply_superoperator(&heis, p, d, d).map(|x| x.hermitian_part()))
        .collect::<Result<Vec<_>>>()?;
    Povm::new(elements)
}

/// Dual of the noisy POVM `{N_*(P_l)}` from a dual `{Q_l}` of `{P_l}`:
/// `|Q'_l⟩⟩ = S⁻¹|Q_l⟩⟩` where `S` is the noise superoperator, so that
/// `Σ_l p(l) ⟨⟨Q'_l|X⟩⟩` is unbiased under the noisy statistics.
pub fn unbias_noise(dual: &DualFrame, noise: &ChoiOperator, picture: Picture) -> Result<DualFrame> {
    let s = schrodinger_superop(noise, picture);
    let sv = s.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= 1e-10 * smax {
        return Err(Error::Singular(smin));
    }
    let s_inv = moore_penrose(&s, 0.0);
    let d = noise.d_in();
    let elements = dual
        .elements()
        .iter()
        .map(|q| apply_superoperator(&s_inv, q, d, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(DualFrame::new(elements))
}

/// `f_{i±}[X] = ½(±3 Tr[X σ_i] + Tr[X])` in the Pauli six-outcome order.
pub fn qubit_estimator(x: &Operator) -> Result<Coefficients> {
    if x.rows() != 2 || x.cols() != 2 {
        return Err(Error::Shape(format!("qubit estimator needs a 2x2 observable, got {}x{}", x.rows(), x.cols())));
    }
    let tr = x.trace();
    let mut values = Vec::with_capacity(6);
    for i in 0..3 {
        let t = (x * &pauli::sigma(i)).trace();
        for sign in [1.0, -1.0] {
            values.push((t * (3.0 * sign) + tr) * 0.5);
        }
    }
    Ok(Coefficients { values, observable: x.clone() })
}

/// Closed form of the depolarizing-unbiased qubit estimator,
/// `±3/(2(1−p)) Tr[X σ_i] + ½ Tr[X]`.
pub fn depolarized_qubit_estimator(x: &Operator, p: f64) -> Result<Coefficients> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Range(format!("depolarizing parameter {p} must lie in [0, 1)")));
    }
    let base = qubit_estimator(x)?;
    if p == 0.0 {
        return Ok(base);
    }
    let tr = x.trace();
    let values = base
        .values
        .iter()
        .map(|f| (f - tr * 0.5) / C64::new(1.0 - p, 0.0) + tr * 0.5)
        .collect();
    Ok(Coefficients { values, observable: x.clone() })
}
