//! The minimum-norm generalized inverse and the closed-form minimal error.

use crate::error::{Error, Result};
use crate::frames::{expansion_map, DualFrame, FrameOperator, Povm};
use crate::operator::{moore_penrose, tol, vectorize, Operator, C64};

use super::{outcome_weights, Ensemble};

/// Handling of outcomes with `p(l|ρ_E) = 0` in the `Y` operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroOutcomes {
    /// Fail with [`Error::ZeroProbability`].
    Reject,
    /// Drop those outcomes from `Y`.
    #[default]
    Prune,
}

fn relative_pinv(m: &Operator) -> Operator {
    let smax = m.singular_values().into_iter().fold(0.0, f64::max);
    moore_penrose(m, tol::RANK * smax.max(f64::MIN_POSITIVE))
}

/// Minimum-norm generalized inverse of `Λ` for the norm `‖f‖²_π = Σ π_l |f_l|²`:
/// `Γ = Λ‡ − [(I−M) π (I−M)]‡ π M Λ‡` with `M = Λ‡Λ`.
pub fn optimal_inverse(elements: &[Operator], weights: &[f64]) -> Result<Operator> {
    if elements.len() != weights.len() {
        return Err(Error::Shape(format!("{} weights for {} outcomes", weights.len(), elements.len())));
    }
    let lambda = expansion_map(elements);
    let l = elements.len();
    let lp = relative_pinv(&lambda);
    let m = &lp * &lambda;
    let id = Operator::identity(l);
    let pi = Operator::diagonal(weights);
    let c = &id - &m;
    // C π C vanishes identically for a minimal IC POVM; cut against the
    // weights, not its own (round-off) spectrum.
    let wmax = weights.iter().copied().fold(0.0, f64::max);
    let inner = moore_penrose(&(&(&c * &pi) * &c), tol::RANK * wmax.max(f64::MIN_POSITIVE));
    let correction = &(&(&inner * &pi) * &m) * &lp;
    Ok(&lp - &correction)
}

/// The dual frame whose coefficients minimize `‖f[X]‖²_π` for every `X`.
pub fn optimal_dual_of(elements: &[Operator], weights: &[f64]) -> Result<DualFrame> {
    let f = FrameOperator::of(elements);
    if !f.is_invertible(1e-9) {
        let (lo, hi) = f.bounds();
        return Err(Error::NotInformationallyComplete(if hi > 0.0 { lo / hi } else { 0.0 }));
    }
    let gamma = optimal_inverse(elements, weights)?;
    Ok(DualFrame::from_inverse_map(&gamma, elements[0].rows(), elements[0].cols()))
}

/// Optimal dual for a POVM and a prior ensemble, `π_ll = p(l|ρ_E)`.
pub fn optimal_dual(povm: &Povm, ensemble: &Ensemble) -> Result<DualFrame> {
    let w = outcome_weights(povm, ensemble)?;
    optimal_dual_of(povm.elements(), &w)
}

/// Hilbert–Schmidt norm of `πΓΛ − Λ†Γ†π`, zero for a minimum-norm inverse.
pub fn min_norm_residual(elements: &[Operator], weights: &[f64], gamma: &Operator) -> f64 {
    let lambda = expansion_map(elements);
    let pi = Operator::diagonal(weights);
    let lhs = &(&pi * gamma) * &lambda;
    let rhs = &(&lambda.adjoint() * &gamma.adjoint()) * &pi;
    (&lhs - &rhs).hs_norm()
}

/// `Y = Σ_j |P_j⟩⟩⟨⟨P_j| / p_j`.
pub fn y_operator(elements: &[Operator], weights: &[f64], zeros: ZeroOutcomes) -> Result<Operator> {
    if elements.len() != weights.len() {
        return Err(Error::Shape(format!("{} weights for {} outcomes", weights.len(), elements.len())));
    }
    let dd = elements[0].rows() * elements[0].cols();
    let mut y = Operator::zeros(dd, dd);
    for (l, (p, &w)) in elements.iter().zip(weights).enumerate() {
        if w <= 0.0 {
            match zeros {
                ZeroOutcomes::Reject => return Err(Error::ZeroProbability(l)),
                ZeroOutcomes::Prune => continue,
            }
        }
        let v = vectorize(p).amplitudes;
        y += &Operator::from_matrix(&v * v.adjoint()).scale_real(1.0 / w);
    }
    Ok(y)
}

/// `⟨⟨X|Y‡|X⟩⟩`, the `ρ_E`-weighted squared norm of the optimal coefficients.
pub fn min_error_first_term(elements: &[Operator], weights: &[f64], x: &Operator, zeros: ZeroOutcomes) -> Result<f64> {
    x.check_same_shape(&elements[0])?;
    let y = y_operator(elements, weights, zeros)?;
    let yinv = y.pinv_hermitian(tol::RANK);
    let v = vectorize(x).amplitudes;
    let q: C64 = v.dotc(&(yinv.matrix() * &v));
    Ok(q.re)
}

/// Minimal single-shot error `δ = ⟨⟨X|Y⁻¹|X⟩⟩ − m₂(X)`.
pub fn min_error_closed_form(povm: &Povm, ensemble: &Ensemble, x: &Operator, zeros: ZeroOutcomes) -> Result<f64> {
    let w = outcome_weights(povm, ensemble)?;
    Ok(min_error_first_term(povm.elements(), &w, x, zeros)? - ensemble.second_moment(x))
}
