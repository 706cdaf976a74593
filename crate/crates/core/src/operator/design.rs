//! Finite unitary sets standing in for the Haar measure.
//!
//! For prime `d` the single-qudit Clifford group (modulo phases) is an exact
//! unitary 2-design, so second-moment twirls over it equal Haar integrals.
//! Other dimensions fall back to Haar samples.

use std::collections::{HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{haar_random_unitary, pauli, Operator, C64, ZERO};
use crate::error::{Error, Result};

/// How a unitary average is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DesignSpec {
    /// The Clifford group, an exact 2-design (prime dimensions only).
    Clifford,
    /// `samples` Haar-random unitaries from a seeded stream.
    Haar { samples: usize, seed: u64 },
}

/// A finite list of unitaries with uniform weight.
#[derive(Clone, Debug)]
pub struct UnitaryDesign {
    pub dim: usize,
    pub unitaries: Vec<Operator>,
    /// True when second moments over the list are exact Haar integrals.
    pub exact: bool,
}

impl UnitaryDesign {
    pub fn build(spec: DesignSpec, d: usize) -> Result<Self> {
        match spec {
            DesignSpec::Clifford => Self::clifford(d),
            DesignSpec::Haar { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(Self::haar(d, samples, &mut rng))
            }
        }
    }

    pub fn haar<R: rand::Rng + ?Sized>(d: usize, samples: usize, rng: &mut R) -> Self {
        Self {
            dim: d,
            unitaries: (0..samples).map(|_| haar_random_unitary(d, rng)).collect(),
            exact: false,
        }
    }

    /// Clifford group of a prime-dimensional qudit, one representative per
    /// phase class. Sizes are `d³(d²−1)`: 24 for qubits, 216 for qutrits.
    pub fn clifford(d: usize) -> Result<Self> {
        if !is_prime(d) {
            return Err(Error::Range(format!(
                "the Clifford group is a 2-design only for prime dimensions, got {d}"
            )));
        }
        let generators = vec![fourier(d), phase_gate(d), pauli::weyl(d, 1, 0), pauli::weyl(d, 0, 1)];
        let mut seen: HashMap<Vec<(i64, i64)>, ()> = HashMap::new();
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        let id = Operator::identity(d);
        seen.insert(phase_key(&id), ());
        queue.push_back(id.clone());
        out.push(id);
        while let Some(u) = queue.pop_front() {
            for g in &generators {
                let v = normalize_phase(&(g * &u));
                let key = phase_key(&v);
                if seen.insert(key, ()).is_none() {
                    queue.push_back(v.clone());
                    out.push(v);
                }
            }
        }
        Ok(Self { dim: d, unitaries: out, exact: true })
    }

    pub fn len(&self) -> usize {
        self.unitaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unitaries.is_empty()
    }

    /// Frame potential `|G|⁻² Σ |Tr[U†V]|⁴`; equals 2 for a unitary 2-design
    /// with `d ≥ 2` and exceeds it otherwise.
    pub fn frame_potential(&self) -> f64 {
        let n = self.len() as f64;
        let mut acc = 0.0;
        for u in &self.unitaries {
            for v in &self.unitaries {
                acc += u.hs_inner_unchecked(v).norm_sqr().powi(2);
            }
        }
        acc / (n * n)
    }
}

pub fn is_prime(d: usize) -> bool {
    d >= 2 && (2..d).take_while(|k| k * k <= d).all(|k| !d.is_multiple_of(k))
}

fn fourier(d: usize) -> Operator {
    let s = 1.0 / (d as f64).sqrt();
    Operator::from_fn(d, d, |j, k| {
        C64::from_polar(s, 2.0 * std::f64::consts::PI * ((j * k) % d) as f64 / d as f64)
    })
}

/// `diag(ω^{j(j−1)/2})` for odd `d`, `diag(1, i)` for qubits; conjugates `X`
/// to `XZ` in both cases.
fn phase_gate(d: usize) -> Operator {
    if d == 2 {
        return Operator::from_row_slice(2, 2, &[C64::new(1.0, 0.0), ZERO, ZERO, C64::new(0.0, 1.0)]).unwrap();
    }
    Operator::from_fn(d, d, |j, k| {
        if j == k {
            let e = (j * (j + d - 1) / 2) % d;
            C64::from_polar(1.0, 2.0 * std::f64::consts::PI * e as f64 / d as f64)
        } else {
            ZERO
        }
    })
}

fn normalize_phase(u: &Operator) -> Operator {
    let e = u.entries();
    let pivot = e.iter().find(|z| z.norm() > 1e-6).copied().unwrap_or(C64::new(1.0, 0.0));
    u.scale(pivot.conj() / pivot.norm())
}

fn phase_key(u: &Operator) -> Vec<(i64, i64)> {
    u.entries()
        .iter()
        .map(|z| ((z.re * 1e6).round() as i64, (z.im * 1e6).round() as i64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clifford_group_sizes() {
        assert_eq!(UnitaryDesign::clifford(2).unwrap().len(), 24);
        assert_eq!(UnitaryDesign::clifford(3).unwrap().len(), 216);
        assert!(UnitaryDesign::clifford(4).is_err());
    }

    #[test]
    fn clifford_is_unitary_two_design() {
        for d in [2, 3] {
            let g = UnitaryDesign::clifford(d).unwrap();
            for u in &g.unitaries {
                assert!((&(&u.adjoint() * u) - &Operator::identity(d)).max_abs() < 1e-12);
            }
            assert!((g.frame_potential() - 2.0).abs() < 1e-9, "d={d}");
        }
    }

    #[test]
    fn haar_samples_are_not_exact() {
        let g = UnitaryDesign::build(DesignSpec::Haar { samples: 50, seed: 1 }, 2).unwrap();
        assert!(!g.exact);
        assert!(g.frame_potential() > 2.0);
    }

    #[test]
    fn primes() {
        let p: Vec<usize> = (0..20).filter(|&d| is_prime(d)).collect();
        assert_eq!(p, vec![2, 3, 5, 7, 11, 13, 17, 19]);
    }
}
