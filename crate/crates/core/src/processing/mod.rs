//! From outcome statistics to estimates: expansion coefficients, the
//! averaging estimator and its statistical error, the minimum-norm dual,
//! noise unbiasing and maximum likelihood.

mod maxlik;
mod noise;
mod optimal;

pub use maxlik::{kl_divergence, log_likelihood, max_likelihood, shannon_entropy, MaxLikFit, MaxLikOptions};
pub use noise::{depolarized_qubit_estimator, noisy_povm, qubit_estimator, unbias_noise, Picture};
pub use optimal::{
    min_error_closed_form, min_error_first_term, min_norm_residual, optimal_dual, optimal_dual_of,
    optimal_inverse, y_operator, ZeroOutcomes,
};

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{DualFrame, Povm};
use crate::operator::{random_pure_state, tol, Operator, C64};

/// Prior over the states being measured.
#[derive(Clone, Debug, PartialEq)]
pub enum Ensemble {
    /// Finitely many states with prior weights.
    Discrete { states: Vec<Operator>, priors: Vec<f64> },
    /// Pure states drawn from the unitarily invariant measure.
    UniformPure { dim: usize },
}

impl Ensemble {
    pub fn discrete(states: Vec<Operator>, priors: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != priors.len() {
            return Err(Error::InvalidState(format!("{} states with {} priors", states.len(), priors.len())));
        }
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("priors must be a distribution (sum {total})")));
        }
        let d = states[0].dim();
        for s in &states {
            s.check_density(tol::POSITIVITY)?;
            if s.dim() != d {
                return Err(Error::Shape(format!("ensemble mixes dimensions {d} and {}", s.dim())));
            }
        }
        Ok(Self::Discrete { states, priors })
    }

    /// An ensemble concentrated on a single state.
    pub fn single(state: Operator) -> Result<Self> {
        Self::discrete(vec![state], vec![1.0])
    }

    pub fn uniform_pure(dim: usize) -> Self {
        Self::UniformPure { dim }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Discrete { states, .. } => states[0].dim(),
            Self::UniformPure { dim } => *dim,
        }
    }

    /// `ρ_E = Σ_k p_k ρ_k`.
    pub fn average(&self) -> Operator {
        match self {
            Self::Discrete { states, priors } => {
                let mut acc = Operator::zeros(states[0].dim(), states[0].dim());
                for (s, &p) in states.iter().zip(priors) {
                    acc += &s.scale_real(p);
                }
                acc
            }
            Self::UniformPure { dim } => Operator::identity(*dim).scale_real(1.0 / *dim as f64),
        }
    }

    /// `m₂(X) = Σ_k p_k |Tr[ρ_k X]|²`; for uniform pure states this is
    /// `(|Tr X|² + Tr[X†X]) / (d(d+1))`.
    pub fn second_moment(&self, x: &Operator) -> f64 {
        match self {
            Self::Discrete { states, priors } => {
                states.iter().zip(priors).map(|(s, &p)| p * x.expectation(s).norm_sqr()).sum()
            }
            Self::UniformPure { dim } => {
                let d = *dim as f64;
                (x.trace().norm_sqr() + x.hs_norm().powi(2)) / (d * (d + 1.0))
            }
        }
    }

    /// Draws one state from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Operator {
        match self {
            Self::Discrete { states, priors } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (s, &p) in states.iter().zip(priors) {
                    acc += p;
                    if u < acc {
                        return s.clone();
                    }
                }
                states[states.len() - 1].clone()
            }
            Self::UniformPure { dim } => Operator::projector(&random_pure_state(*dim, rng)),
        }
    }
}

/// Outcome probabilities `p(l|ρ) = Tr[ρ P_l]`.
pub fn probabilities(povm: &Povm, rho: &Operator) -> Result<Vec<f64>> {
    povm.probabilities(rho)
}

/// Diagonal weights `π_ll = p(l|ρ_E)` of the coefficient norm.
pub fn outcome_weights(povm: &Povm, ensemble: &Ensemble) -> Result<Vec<f64>> {
    if ensemble.dim() != povm.dim() {
        return Err(Error::Shape(format!("ensemble on {} for a POVM on {}", ensemble.dim(), povm.dim())));
    }
    povm.probabilities(&ensemble.average())
}

/// Expansion coefficients `f_l[X]` of an observable over POVM outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub values: Vec<C64>,
    pub observable: Operator,
}

impl Coefficients {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ_l f_l P_l`, which reproduces the observable for unbiased coefficients.
    pub fn reconstruction(&self, povm: &Povm) -> Result<Operator> {
        if povm.len() != self.len() {
            return Err(Error::Shape(format!("{} coefficients for {} outcomes", self.len(), povm.len())));
        }
        let mut acc = Operator::zeros(povm.dim(), povm.dim());
        for (p, &f) in povm.elements().iter().zip(&self.values) {
            acc += &p.scale(f);
        }
        Ok(acc)
    }

    /// `‖Σ_l f_l P_l − X‖_HS`.
    pub fn unbiasedness_residual(&self, povm: &Povm) -> Result<f64> {
        Ok((&self.reconstruction(povm)? - &self.observable).hs_norm())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["outcome_index", "re", "im"])?;
        for (l, f) in self.values.iter().enumerate() {
            out.serialize((l, f.re, f.im))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `f_l[X] = ⟨⟨Q_l|X⟩⟩`.
pub fn coefficients_from_dual(dual: &DualFrame, x: &Operator) -> Result<Coefficients> {
    Ok(Coefficients { values: dual.coefficients(x)?, observable: x.clone() })
}

/// Reads `(outcome_index, re, im)` rows; missing indices are zero.
pub fn read_coefficients_csv<R: Read>(r: R) -> Result<Vec<C64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (l, re, im) in rows {
        out[l] = C64::new(re, im);
    }
    Ok(out)
}

/// Outcome counts `n_l` of `N` repetitions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub counts: Vec<u64>,
}

impl Counts {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Relative frequencies `ν_l = n_l / N`.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        let n = self.total();
        if n == 0 {
            return Err(Error::Range("no counts recorded".into()));
        }
        Ok(self.counts.iter().map(|&c| c as f64 / n as f64).collect())
    }

    /// Reads `(outcome_index, count)` rows. With `outcomes` given, the
    /// vector has that length and out-of-range indices are rejected.
    pub fn read_csv<R: Read>(r: R, outcomes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<(usize, u64)> = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        let n = outcomes.unwrap_or_else(|| rows.iter().map(|r| r.0 + 1).max().unwrap_or(0));
        let mut counts = vec![0u64; n];
        for (l, c) in rows {
            if l >= n {
                return Err(Error::Format(format!("outcome index {l} out of range for {n} outcomes")));
            }
            counts[l] += c;
        }
        Ok(Self { counts })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["outcome_index", "count"])?;
        for (l, c) in self.counts.iter().enumerate() {
            out.serialize((l, c))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The averaging estimate `Σ_l (n_l/N) f_l`.
pub fn estimate(f: &Coefficients, counts: &Counts) -> Result<C64> {
    estimate_values(&f.values, counts)
}

pub fn estimate_values(f: &[C64], counts: &Counts) -> Result<C64> {
    if f.len() != counts.len() {
        return Err(Error::Shape(format!("{} coefficients for {} outcomes", f.len(), counts.len())));
    }
    let nu = counts.frequencies()?;
    Ok(f.iter().zip(&nu).map(|(f, &v)| f * v).sum())
}

/// How a dual frame is chosen for averaging estimates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualKind {
    /// `F⁻¹|P_l⟩⟩`.
    Canonical,
    /// Minimum-norm dual for the ensemble's outcome weights.
    #[default]
    Optimal,
}

/// Builds the requested dual of an IC POVM.
pub fn build_dual(povm: &Povm, kind: DualKind, ensemble: &Ensemble) -> Result<DualFrame> {
    match kind {
        DualKind::Canonical => crate::frames::canonical_dual(povm),
        DualKind::Optimal => optimal_dual(povm, ensemble),
    }
}

/// Number of repetitions, or exact probabilities in place of frequencies.
/// Serialized as the count or as the string `"exact"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ShotsRepr", into = "ShotsRepr")]
pub enum Shots {
    Exact,
    Finite(u64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShotsRepr {
    Count(u64),
    Word(String),
}

impl TryFrom<ShotsRepr> for Shots {
    type Error = String;

    fn try_from(r: ShotsRepr) -> std::result::Result<Self, String> {
        match r {
            ShotsRepr::Count(0) => Err("shot count must be positive".into()),
            ShotsRepr::Count(n) => Ok(Self::Finite(n)),
            ShotsRepr::Word(w) if w == "exact" => Ok(Self::Exact),
            ShotsRepr::Word(w) => Err(format!("expected a shot count or \"exact\", got {w:?}")),
        }
    }
}

impl From<Shots> for ShotsRepr {
    fn from(s: Shots) -> Self {
        match s {
            Shots::Exact => Self::Word("exact".into()),
            Shots::Finite(n) => Self::Count(n),
        }
    }
}

impl std::str::FromStr for Shots {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exact" {
            return Ok(Self::Exact);
        }
        match s.parse::<u64>() {
            Ok(0) | Err(_) => Err(Error::Config(format!("shots must be a positive integer or \"exact\", got {s:?}"))),
            Ok(n) => Ok(Self::Finite(n)),
        }
    }
}

/// Multinomial draw of `n` outcomes, by sequential binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Result<Counts> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-8 {
        return Err(Error::Range(format!("not a probability vector (sum {total})")));
    }
    let mut counts = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (l, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if l + 1 == probs.len() {
            counts[l] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            rng.sample(rand_distr::Binomial::new(left, q).expect("valid binomial parameters"))
        };
        counts[l] = draw;
        left -= draw;
        mass -= p;
    }
    Ok(Counts { counts })
}

/// Frequencies from exact probabilities or from a multinomial sample.
pub fn observe<R: Rng + ?Sized>(probs: &[f64], shots: Shots, rng: &mut R) -> Result<(Vec<f64>, Option<Counts>)> {
    match shots {
        Shots::Exact => Ok((probs.to_vec(), None)),
        Shots::Finite(n) => {
            let c = sample_multinomial(probs, n, rng)?;
            Ok((c.frequencies()?, Some(c)))
        }
    }
}

/// Single-shot error `δ(X)_E = Σ_l |f_l|² p(l|ρ_E) − m₂(X)`.
pub fn statistical_error(f: &Coefficients, povm: &Povm, ensemble: &Ensemble) -> Result<f64> {
    let p = outcome_weights(povm, ensemble)?;
    if p.len() != f.len() {
        return Err(Error::Shape(format!("{} coefficients for {} outcomes", f.len(), p.len())));
    }
    let first: f64 = f.values.iter().zip(&p).map(|(f, &p)| f.norm_sqr() * p).sum();
    Ok(first - ensemble.second_moment(&f.observable))
}

/// Error of an `N`-shot average: the single-shot value divided by `N`.
pub fn statistical_error_per_n(f: &Coefficients, povm: &Povm, ensemble: &Ensemble, shots: u64) -> Result<f64> {
    if shots == 0 {
        return Err(Error::Range("shot count must be positive".into()));
    }
    Ok(statistical_error(f, povm, ensemble)? / shots as f64)
}
