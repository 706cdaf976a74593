//! Maximum-likelihood state reconstruction.
//!
//! Maximizes `𝓛[ρ] = Σ_l ν_l log Tr[ρ P_l]` over density operators with the
//! `R ρ R` fixed-point map, `R(ρ) = Σ_l (ν_l / p_l(ρ)) P_l`. A plain step can
//! overshoot, so each iteration tries the diluted maps `(I + εR) ρ (I + εR)`
//! with decreasing `ε` until the likelihood does not decrease.

use crate::error::{Error, Result};
use crate::frames::Povm;
use crate::operator::{tol, Operator};

use super::Counts;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxLikOptions {
    pub max_iters: usize,
    /// Stop once `‖R(ρ)ρ − ρ‖₁` falls below this.
    pub tol: f64,
    /// Optional mixing `ρ ← (1−m)ρ + m I/d` after each step, kept only when it
    /// does not lower the likelihood.
    pub mixing: f64,
}

impl Default for MaxLikOptions {
    fn default() -> Self {
        Self { max_iters: 20_000, tol: 1e-11, mixing: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct MaxLikFit {
    pub state: Operator,
    /// Log-likelihood of the initial state followed by every accepted iterate.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl MaxLikFit {
    /// The estimate, or [`Error::NotConverged`] if the budget ran out.
    pub fn into_state(self) -> Result<Operator> {
        if self.converged {
            Ok(self.state)
        } else {
            Err(Error::NotConverged { iters: self.iterations, residual: self.residual })
        }
    }
}

/// `Σ_l ν_l log p(l|ρ)`; `−∞` if an observed outcome has zero probability.
pub fn log_likelihood(povm: &Povm, freqs: &[f64], rho: &Operator) -> f64 {
    let mut acc = 0.0;
    for (p, &nu) in povm.elements().iter().zip(freqs) {
        if nu > 0.0 {
            let pl = p.expectation(rho).re;
            if pl <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += nu * pl.ln();
        }
    }
    acc
}

/// `S(ν) = −Σ ν log ν`.
pub fn shannon_entropy(nu: &[f64]) -> f64 {
    -nu.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `D(ν‖p) = Σ ν_l log(ν_l/p_l)`.
pub fn kl_divergence(nu: &[f64], p: &[f64]) -> Result<f64> {
    if nu.len() != p.len() {
        return Err(Error::Shape(format!("{} vs {} outcomes", nu.len(), p.len())));
    }
    let mut acc = 0.0;
    for (l, (&v, &q)) in nu.iter().zip(p).enumerate() {
        if v > 0.0 {
            if q <= 0.0 {
                return Err(Error::Support(l));
            }
            acc += v * (v / q).ln();
        }
    }
    Ok(acc.max(0.0))
}

fn r_operator(povm: &Povm, freqs: &[f64], rho: &Operator) -> Operator {
    let d = povm.dim();
    let mut r = Operator::zeros(d, d);
    for (p, &nu) in povm.elements().iter().zip(freqs) {
        if nu > 0.0 {
            let pl = p.expectation(rho).re;
            if pl > 0.0 {
                r += &p.scale_real(nu / pl);
            }
        }
    }
    r
}

fn normalized_sandwich(m: &Operator, rho: &Operator) -> Option<Operator> {
    let out = (&(m * rho) * &m.adjoint()).hermitian_part();
    let tr = out.trace().re;
    (tr > 0.0 && tr.is_finite()).then(|| out.scale_real(1.0 / tr))
}

pub fn max_likelihood(povm: &Povm, counts: &Counts, init: &Operator, opts: MaxLikOptions) -> Result<MaxLikFit> {
    if counts.len() != povm.len() {
        return Err(Error::Shape(format!("{} counts for {} outcomes", counts.len(), povm.len())));
    }
    init.check_density(tol::POSITIVITY)?;
    let d = povm.dim();
    if init.dim() != d {
        return Err(Error::Shape(format!("initial state on {} for a POVM on {d}", init.dim())));
    }
    if init.min_eigenvalue() <= 0.0 {
        return Err(Error::InvalidState("initial state must be full rank".into()));
    }
    let freqs = counts.frequencies()?;
    let id = Operator::identity(d);
    let mixed = id.scale_real(1.0 / d as f64);

    let mut rho = init.clone();
    let mut ll = log_likelihood(povm, &freqs, &rho);
    let mut trace = vec![ll];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        let r = r_operator(povm, &freqs, &rho);
        residual = (&(&r * &rho) - &rho).trace_norm();
        if residual < opts.tol {
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut eps = f64::INFINITY;
        // near the optimum the gain per step is below the resolution of `ll`
        let floor = ll - 8.0 * f64::EPSILON * ll.abs().max(1.0);
        while eps > 1e-12 {
            let m = if eps.is_infinite() { r.clone() } else { &id + &r.scale_real(eps) };
            if let Some(cand) = normalized_sandwich(&m, &rho) {
                let cl = log_likelihood(povm, &freqs, &cand);
                if cl >= floor {
                    accepted = Some((cand, cl));
                    break;
                }
            }
            eps = if eps.is_infinite() { 1.0 } else { eps * 0.5 };
        }
        let Some((mut next, mut next_ll)) = accepted else {
            // no ascent direction left at double precision
            converged = residual < opts.tol.sqrt();
            break;
        };
        if opts.mixing > 0.0 {
            let mixed_next = &next.scale_real(1.0 - opts.mixing) + &mixed.scale_real(opts.mixing);
            let ml = log_likelihood(povm, &freqs, &mixed_next);
            if ml >= next_ll {
                next = mixed_next;
                next_ll = ml;
            }
        }
        rho = next;
        ll = next_ll;
        trace.push(ll);
        iterations += 1;
    }
    if !converged && iterations >= opts.max_iters {
        log::warn!("maximum likelihood stopped after {iterations} iterations (residual {residual:.3e})");
    }
    Ok(MaxLikFit { state: rho, log_likelihood: trace, iterations, residual, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_closed_forms() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::Support(1))));
    }

    #[test]
    fn boundary_estimate_for_one_sided_counts() {
        let p = Povm::computational(2);
        let fit = max_likelihood(
            &p,
            &Counts::new(vec![50, 0]),
            &Operator::identity(2).scale_real(0.5),
            MaxLikOptions { max_iters: 200, ..Default::default() },
        )
        .unwrap();
        assert!(fit.state.get(0, 0).re > 1.0 - 1e-12);
    }

    #[test]
    fn rejects_rank_deficient_start() {
        let p = Povm::pauli6();
        let r = max_likelihood(&p, &Counts::new(vec![1; 6]), &Operator::matrix_unit(2, 2, 0, 0), Default::default());
        assert!(r.is_err());
    }
}
