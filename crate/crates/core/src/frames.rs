//! POVMs as operator frames, their frame operators and dual frames.
//!
//! Operators are identified with vectors through [`vectorize`]; a set
//! `{P_l}` is a frame when `F = Σ |P_l⟩⟩⟨⟨P_l|` is invertible and a dual set
//! `{Q_l}` satisfies `Σ |P_l⟩⟩⟨⟨Q_l| = I`, so that `X = Σ ⟨⟨Q_l|X⟩⟩ P_l`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{design::UnitaryDesign, random_pure_state, tol, vectorize, Operator, OperatorJson, C64};

/// A finite POVM on a `dim`-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: Vec<Operator>,
}

/// Outcome of [`Povm::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PovmDiagnostics {
    pub min_eigenvalues: Vec<f64>,
    /// Operator norm of `Σ P_l − I`.
    pub completeness: f64,
    pub passed: bool,
}

impl Povm {
    /// Builds a POVM, checking positivity and completeness at the default
    /// tolerance.
    pub fn new(elements: Vec<Operator>) -> Result<Self> {
        let povm = Self::from_elements(elements)?;
        let diag = povm.validate(tol::POSITIVITY);
        if !diag.passed {
            let worst = diag.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            return Err(Error::InvalidPovm(format!(
                "min eigenvalue {worst:.3e}, completeness residual {:.3e}",
                diag.completeness
            )));
        }
        Ok(povm)
    }

    /// Builds the element list with only shape checks.
    pub fn from_elements(elements: Vec<Operator>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::InvalidPovm("no elements".into()))?;
        let dim = first.rows();
        for (l, p) in elements.iter().enumerate() {
            if p.rows() != dim || p.cols() != dim {
                return Err(Error::Shape(format!(
                    "element {l} is {}x{}, expected {dim}x{dim}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        Ok(Self { dim, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn element(&self, l: usize) -> &Operator {
        &self.elements[l]
    }

    pub fn validate(&self, tol: f64) -> PovmDiagnostics {
        let min_eigenvalues: Vec<f64> = self.elements.iter().map(|p| p.min_eigenvalue()).collect();
        let mut sum = Operator::zeros(self.dim, self.dim);
        for p in &self.elements {
            sum += p;
        }
        let completeness = (&sum - &Operator::identity(self.dim)).op_norm();
        let hermitian = self.elements.iter().all(|p| p.is_hermitian(tol));
        let passed = hermitian && completeness <= tol && min_eigenvalues.iter().all(|&m| m >= -tol);
        PovmDiagnostics { min_eigenvalues, completeness, passed }
    }

    /// Outcome probabilities `Tr[ρ P_l]`.
    pub fn probabilities(&self, rho: &Operator) -> Result<Vec<f64>> {
        rho.check_density(tol::POSITIVITY)?;
        if rho.dim() != self.dim {
            return Err(Error::Shape(format!("state of dimension {} for a POVM on {}", rho.dim(), self.dim)));
        }
        Ok(self.elements.iter().map(|p| p.expectation(rho).re.max(0.0)).collect())
    }

    pub fn frame_operator(&self) -> FrameOperator {
        FrameOperator::of(&self.elements)
    }

    /// True iff the frame operator's smallest eigenvalue exceeds
    /// `rel_tol · λ_max`.
    pub fn is_info_complete(&self, rel_tol: f64) -> bool {
        self.frame_operator().is_invertible(rel_tol)
    }

    /// The expansion map `Λ`: a `d² × L` matrix whose columns are `|P_l⟩⟩`.
    pub fn expansion_map(&self) -> Operator {
        expansion_map(&self.elements)
    }

    /// The six-outcome qubit POVM `(1/3)|ψ_{i±}⟩⟨ψ_{i±}|` over the Pauli
    /// eigenstates, ordered `x+, x−, y+, y−, z+, z−`.
    pub fn pauli6() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| C64::new(re, im);
        let kets = [
            [c(s, 0.0), c(s, 0.0)],
            [c(s, 0.0), c(-s, 0.0)],
            [c(s, 0.0), c(0.0, s)],
            [c(s, 0.0), c(0.0, -s)],
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1.0, 0.0)],
        ];
        let elements = kets.iter().map(|k| Operator::projector(k).scale_real(1.0 / 3.0)).collect();
        Self { dim: 2, elements }
    }

    /// Projective measurement in the computational basis (not IC for `d > 1`).
    pub fn computational(d: usize) -> Self {
        Self { dim: d, elements: (0..d).map(|i| Operator::matrix_unit(d, d, i, i)).collect() }
    }

    /// Uniform mixture of `d + 1` mutually unbiased bases of a prime
    /// dimension, each weighted `1/(d+1)`: the computational basis and the
    /// quadratic-phase bases `ω^{k n² + j n}/√d` (`i^{k n}(−1)^{j n}/√2` for
    /// qubits). For `d = 2` this is the Pauli six-outcome POVM, reordered.
    pub fn mub(d: usize) -> Result<Self> {
        if !crate::operator::design::is_prime(d) {
            return Err(Error::Range(format!("mutually unbiased bases are built for prime d, got {d}")));
        }
        let w = 1.0 / (d + 1) as f64;
        let norm = 1.0 / (d as f64).sqrt();
        let tau = 2.0 * std::f64::consts::PI;
        let mut elements = Vec::with_capacity(d * (d + 1));
        for j in 0..d {
            elements.push(Operator::matrix_unit(d, d, j, j).scale_real(w));
        }
        for k in 0..d {
            for j in 0..d {
                let v: Vec<C64> = (0..d)
                    .map(|n| {
                        let turns = if d == 2 {
                            (k * n) as f64 / 4.0 + (j * n) as f64 / 2.0
                        } else {
                            ((k * n * n + j * n) % d) as f64 / d as f64
                        };
                        C64::from_polar(norm, tau * turns)
                    })
                    .collect();
                elements.push(Operator::projector(&v).scale_real(w));
            }
        }
        let povm = Self { dim: d, elements };
        povm.check_complete()?;
        Ok(povm)
    }

    /// Default IC measurement: the Pauli POVM for qubits, mutually unbiased
    /// bases for other primes.
    pub fn standard(d: usize) -> Result<Self> {
        if d == 2 {
            Ok(Self::pauli6())
        } else {
            Self::mub(d)
        }
    }

    /// A generic IC POVM: `n ≥ d²` Haar-random rank-one elements rescaled by
    /// `S^{-1/2}` where `S` is their sum.
    pub fn random_ic<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<Self> {
        if n < d * d {
            return Err(Error::Range(format!("{n} outcomes cannot be IC in dimension {d}")));
        }
        let raw: Vec<Operator> = (0..n).map(|_| Operator::projector(&random_pure_state(d, rng))).collect();
        let mut s = Operator::zeros(d, d);
        for p in &raw {
            s += p;
        }
        let t = s.pinv_sqrt_psd(tol::RANK);
        let elements = raw.iter().map(|p| (&(&t * p) * &t).hermitian_part()).collect();
        Self::new(elements)
    }

    /// Discretized covariant POVM `{U ξ U†}` over a finite unitary list,
    /// rescaled by `d / (|G| Tr ξ)` so the elements sum to the identity
    /// whenever the list is a unitary 1-design.
    pub fn covariant(seed: &Operator, unitaries: &[Operator]) -> Result<Self> {
        let seed = seed.clone().checked_positive(tol::POSITIVITY)?;
        let d = seed.dim();
        let tr = seed.trace().re;
        if tr <= 0.0 || unitaries.is_empty() {
            return Err(Error::InvalidPovm("seed has zero trace or no unitaries".into()));
        }
        let w = d as f64 / (tr * unitaries.len() as f64);
        let elements = unitaries
            .iter()
            .map(|u| (&(u * &seed) * &u.adjoint()).scale_real(w).hermitian_part())
            .collect();
        let povm = Self::from_elements(elements)?;
        povm.check_complete()?;
        Ok(povm)
    }

    /// Covariant POVM over an exact unitary design.
    pub fn covariant_design(seed: &Operator, design: &UnitaryDesign) -> Result<Self> {
        Self::covariant(seed, &design.unitaries)
    }

    /// Product POVM `{P_i ⊗ E_k}`, outcome index `i · |E| + k`.
    pub fn tensor(&self, other: &Povm) -> Povm {
        let mut elements = Vec::with_capacity(self.len() * other.len());
        for p in &self.elements {
            for e in &other.elements {
                elements.push(p.tensor(e));
            }
        }
        Povm { dim: self.dim * other.dim, elements }
    }

    fn check_complete(&self) -> Result<()> {
        let diag = self.validate(tol::POSITIVITY);
        if diag.passed {
            Ok(())
        } else {
            Err(Error::InvalidPovm(format!("completeness residual {:.3e}", diag.completeness)))
        }
    }
}

/// `Λ` for an arbitrary operator list: columns `|P_l⟩⟩`.
pub fn expansion_map(elements: &[Operator]) -> Operator {
    let rows = elements.first().map(|p| p.rows() * p.cols()).unwrap_or(0);
    let cols: Vec<_> = elements.iter().map(|p| vectorize(p).amplitudes).collect();
    Operator::from_matrix(DMatrix::from_fn(rows, elements.len(), |r, l| cols[l][r]))
}

/// `F = Σ |P_l⟩⟩⟨⟨P_l|` on the operator space.
#[derive(Clone, Debug)]
pub struct FrameOperator {
    pub matrix: Operator,
}

impl FrameOperator {
    pub fn of(elements: &[Operator]) -> Self {
        let lambda = expansion_map(elements);
        Self { matrix: &lambda * &lambda.adjoint() }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix.eigenvalues()
    }

    /// Frame bounds `(λ_min, λ_max)`.
    pub fn bounds(&self) -> (f64, f64) {
        let ev = self.eigenvalues();
        (ev[0], ev[ev.len() - 1])
    }

    pub fn is_invertible(&self, rel_tol: f64) -> bool {
        let (lo, hi) = self.bounds();
        hi > 0.0 && lo > rel_tol * hi
    }

    /// `Σ_l |⟨⟨P_l|X⟩⟩|²` evaluated through the frame operator.
    pub fn quadratic_form(&self, x: &Operator) -> f64 {
        let v = vectorize(x).amplitudes;
        let fv = self.matrix.matrix() * &v;
        v.dotc(&fv).re
    }
}

/// A dual set `{Q_l}` of some frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DualFrame {
    elements: Vec<Operator>,
}

impl DualFrame {
    pub fn new(elements: Vec<Operator>) -> Self {
        Self { elements }
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, l: usize) -> &Operator {
        &self.elements[l]
    }

    /// Expansion coefficients `f_l[X] = ⟨⟨Q_l|X⟩⟩`.
    pub fn coefficients(&self, x: &Operator) -> Result<Vec<C64>> {
        self.elements.iter().map(|q| q.hs_inner(x)).collect()
    }

    /// `Σ_l ν_l Q_l†`: the operator whose expectations reproduce the
    /// averaging estimates `Σ ν_l f_l[X]` for every `X`.
    pub fn reconstruct(&self, weights: &[f64]) -> Result<Operator> {
        if weights.len() != self.len() {
            return Err(Error::Shape(format!("{} weights for {} dual elements", weights.len(), self.len())));
        }
        let q0 = &self.elements[0];
        let mut acc = Operator::zeros(q0.cols(), q0.rows());
        for (q, &w) in self.elements.iter().zip(weights) {
            if w != 0.0 {
                acc += &q.adjoint().scale_real(w);
            }
        }
        Ok(acc)
    }

    /// Rows of the generalized inverse `Γ`, i.e. `⟨⟨Q_l|` stacked.
    pub fn inverse_map(&self) -> Operator {
        expansion_map(&self.elements).adjoint()
    }

    /// Inverse of [`DualFrame::inverse_map`]: rows of `Γ` back to operators.
    pub fn from_inverse_map(gamma: &Operator, rows: usize, cols: usize) -> Self {
        let elements = (0..gamma.rows())
            .map(|l| Operator::from_fn(rows, cols, |m, n| gamma.get(l, m * cols + n).conj()))
            .collect();
        Self { elements }
    }
}

/// Canonical dual `|D_l⟩⟩ = F⁻¹|P_l⟩⟩` of an operator frame.
pub fn canonical_dual_of(elements: &[Operator]) -> Result<DualFrame> {
    let f = FrameOperator::of(elements);
    let (lo, hi) = f.bounds();
    if !f.is_invertible(1e-9) {
        return Err(Error::NotInformationallyComplete(if hi > 0.0 { lo / hi } else { 0.0 }));
    }
    let f_inv = f.matrix.pinv_hermitian(tol::RANK);
    let d = elements[0].rows();
    let c = elements[0].cols();
    let lambda = expansion_map(elements);
    let dual_cols = &f_inv * &lambda;
    let out = (0..elements.len())
        .map(|l| Operator::from_fn(d, c, |m, n| dual_cols.get(m * c + n, l)))
        .collect();
    Ok(DualFrame::new(out))
}

pub fn canonical_dual(povm: &Povm) -> Result<DualFrame> {
    canonical_dual_of(povm.elements())
}

/// `Q_l = D_l + Y_l − Σ_j ⟨⟨P_j|D_l⟩⟩ Y_j`, a dual for any choice of `Y`.
pub fn alternate_dual_of(elements: &[Operator], dual: &DualFrame, y: &[Operator]) -> Result<DualFrame> {
    let n = elements.len();
    if dual.len() != n || y.len() != n {
        return Err(Error::Shape(format!(
            "{n} frame elements, {} duals, {} free operators",
            dual.len(),
            y.len()
        )));
    }
    for yl in y {
        yl.check_same_shape(&elements[0])?;
    }
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let dl = dual.element(l);
        let mut q = dl + &y[l];
        for j in 0..n {
            let c = elements[j].hs_inner_unchecked(dl);
            if c != C64::new(0.0, 0.0) {
                q = &q - &y[j].scale(c);
            }
        }
        out.push(q);
    }
    Ok(DualFrame::new(out))
}

pub fn alternate_dual(povm: &Povm, dual: &DualFrame, y: &[Operator]) -> Result<DualFrame> {
    alternate_dual_of(povm.elements(), dual, y)
}

/// Operator norm of `Σ_l |P_l⟩⟩⟨⟨Q_l| − I`.
pub fn dual_residual_of(elements: &[Operator], dual: &DualFrame) -> Result<f64> {
    if elements.len() != dual.len() {
        return Err(Error::Shape(format!("{} frame elements vs {} duals", elements.len(), dual.len())));
    }
    let lambda = expansion_map(elements);
    let gamma = dual.inverse_map();
    let prod = &lambda * &gamma;
    Ok((&prod - &Operator::identity(prod.rows())).op_norm())
}

pub fn verify_dual(povm: &Povm, dual: &DualFrame, tol: f64) -> bool {
    dual_residual_of(povm.elements(), dual).is_ok_and(|r| r <= tol)
}

/// JSON layout for POVMs and dual frames: `{dimension, elements: [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorListJson {
    pub dimension: usize,
    pub elements: Vec<OperatorJson>,
}

impl Serialize for Povm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorListJson {
            dimension: self.dim,
            elements: self.elements.iter().map(OperatorJson::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = OperatorListJson::deserialize(d)?;
        let elements = raw
            .elements
            .into_iter()
            .map(Operator::try_from)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let povm = Povm::new(elements).map_err(serde::de::Error::custom)?;
        if povm.dim != raw.dimension {
            return Err(serde::de::Error::custom(format!(
                "dimension header {} does not match elements of size {}",
                raw.dimension, povm.dim
            )));
        }
        Ok(povm)
    }
}

impl Serialize for DualFrame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorListJson {
            dimension: self.elements.first().map_or(0, |q| q.rows()),
            elements: self.elements.iter().map(OperatorJson::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DualFrame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = OperatorListJson::deserialize(d)?;
        let elements = raw
            .elements
            .into_iter()
            .map(Operator::try_from)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Ok(DualFrame::new(elements))
    }
}
