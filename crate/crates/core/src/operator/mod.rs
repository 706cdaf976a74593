//! Dense complex operators and the vectorization calculus.
//!
//! An [`Operator`] is a dense complex matrix. Square operators double as
//! states, observables, POVM elements and Choi operators; operators on the
//! `d²`-dimensional operator space double as superoperators acting on
//! [`VecOperator`]s.
//!
//! Vectorization is row-major: `|X⟩⟩ = Σ X_mn |m⟩|n⟩`, so the amplitude at
//! `m·cols + n` is the entry `(m, n)`. With this convention
//! `(A ⊗ B)|C⟩⟩ = |A C Bᵀ⟩⟩` and `Tr₁[|A⟩⟩⟨⟨B|] = Aᵀ B*`.

mod linalg;
mod random;
mod shape;

pub mod design;
pub mod pauli;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use linalg::{moore_penrose, Eigh};
pub use random::{
    haar_random_unitary, random_density, random_hermitian, random_isometry, random_kraus,
    random_operator, random_pure_state, twirl_check,
};
pub use shape::{link_product, LabeledOperator, SubsystemShape};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default tolerances shared by every module.
pub mod tol {
    /// Positivity and hermiticity checks.
    pub const POSITIVITY: f64 = 1e-9;
    /// Algebraic identities (dual relations, normalizations).
    pub const ALGEBRAIC: f64 = 1e-10;
    /// Relative threshold for pseudo-inverses and rank decisions.
    pub const RANK: f64 = 1e-10;
}

#[derive(Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator {}x{} ", self.rows(), self.cols())?;
        f.debug_list()
            .entries((0..self.rows()).map(|m| (0..self.cols()).map(|n| self.mat[(m, n)]).collect::<Vec<_>>()))
            .finish()
    }
}

impl Operator {
    pub fn from_matrix(mat: DMatrix<C64>) -> Self {
        Self { mat }
    }

    /// Builds an operator from entries listed in row-major order.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape("operator dimensions must be positive".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} operator",
                entries.len()
            )));
        }
        Ok(Self { mat: DMatrix::from_row_slice(rows, cols, entries) })
    }

    /// Real-valued rows, mostly for tests and small literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |m, n| C64::new(rows[m][n], 0.0))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { mat: DMatrix::from_fn(rows, cols, f) }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { mat: DMatrix::zeros(rows, cols) }
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: DMatrix::identity(d, d) }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let d = entries.len();
        Self::from_fn(d, d, |m, n| if m == n { C64::new(entries[m], 0.0) } else { ZERO })
    }

    /// `|m⟩⟨n|` on a `rows × cols` space.
    pub fn matrix_unit(rows: usize, cols: usize, m: usize, n: usize) -> Self {
        let mut out = Self::zeros(rows, cols);
        out.mat[(m, n)] = ONE;
        out
    }

    /// Column vector `|v⟩` as a `len × 1` operator.
    pub fn ket(v: &[C64]) -> Self {
        Self { mat: DMatrix::from_column_slice(v.len(), 1, v) }
    }

    /// Computational basis ket `|i⟩` in dimension `d`.
    pub fn basis_ket(d: usize, i: usize) -> Self {
        Self::matrix_unit(d, 1, i, 0)
    }

    /// `|u⟩⟨v|` for column vectors.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |m, n| u[m] * v[n].conj())
    }

    pub fn projector(v: &[C64]) -> Self {
        Self::outer(v, v)
    }

    pub fn rows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Dimension of a square operator (panics on rectangular input).
    pub fn dim(&self) -> usize {
        assert!(self.is_square(), "dim() on a {}x{} operator", self.rows(), self.cols());
        self.rows()
    }

    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.mat[(m, n)]
    }

    pub fn set(&mut self, m: usize, n: usize, z: C64) {
        self.mat[(m, n)] = z;
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for m in 0..self.rows() {
            for n in 0..self.cols() {
                out.push(self.mat[(m, n)]);
            }
        }
        out
    }

    /// First column as a vector; the natural reading of a `d × 1` ket.
    pub fn column(&self, n: usize) -> Vec<C64> {
        self.mat.column(n).iter().copied().collect()
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { mat: self.mat.transpose() }
    }

    pub fn conj(&self) -> Self {
        Self { mat: self.mat.map(|z| z.conj()) }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { mat: &self.mat * c }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Hilbert–Schmidt product `⟨⟨A|B⟩⟩ = Tr[A†B]`.
    pub fn hs_inner(&self, other: &Operator) -> Result<C64> {
        self.check_same_shape(other)?;
        Ok(self.hs_inner_unchecked(other))
    }

    pub(crate) fn hs_inner_unchecked(&self, other: &Operator) -> C64 {
        self.mat.iter().zip(other.mat.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let svd = linalg::accurate_svd(&self.mat, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.singular_values().first().copied().unwrap_or(0.0)
    }

    /// Sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &Operator) -> Self {
        Self { mat: self.mat.kronecker(&other.mat) }
    }

    pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a Operator>) -> Self {
        factors
            .into_iter()
            .fold(Self::identity(1), |acc, f| acc.tensor(f))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.mat - self.mat.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `(X + X†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self { mat: (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0) }
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && self.min_eigenvalue() >= -tol
    }

    /// Verifies hermiticity within `tol` and returns the exact hermitian part.
    pub fn checked_hermitian(self, tol: f64) -> Result<Self> {
        let defect = self.hermiticity_defect();
        if defect > tol {
            return Err(Error::NotHermitian(defect));
        }
        Ok(self.hermitian_part())
    }

    /// Verifies positivity within `tol` and returns the exact hermitian part.
    pub fn checked_positive(self, tol: f64) -> Result<Self> {
        let h = self.checked_hermitian(tol)?;
        let min = h.min_eigenvalue();
        if min < -tol {
            return Err(Error::NotPositive(min));
        }
        Ok(h)
    }

    /// Checks that `self` is a density operator: PSD with unit trace.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(Error::InvalidState("state must be square".into()));
        }
        let defect = self.hermiticity_defect();
        if defect > tol {
            return Err(Error::InvalidState(format!("not hermitian (deviation {defect:.3e})")));
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol.max(1e-12) {
            return Err(Error::InvalidState(format!("trace {tr} differs from one")));
        }
        Ok(())
    }

    pub(crate) fn check_same_shape(&self, other: &Operator) -> Result<()> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Ok(())
    }

    /// Expectation `Tr[ρ X]`.
    pub fn expectation(&self, rho: &Operator) -> C64 {
        // Tr[ρX] = Σ ρ_nm X_mn
        let mut acc = ZERO;
        for m in 0..self.rows() {
            for n in 0..self.cols() {
                acc += rho.mat[(n, m)] * self.mat[(m, n)];
            }
        }
        acc
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator { mat: &self.mat + &rhs.mat }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator { mat: &self.mat - &rhs.mat }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator { mat: &self.mat * &rhs.mat }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator { mat: self.mat + rhs.mat }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator { mat: self.mat - rhs.mat }
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator { mat: self.mat * rhs.mat }
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.mat += &rhs.mat;
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator { mat: -&self.mat }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale_real(rhs)
    }
}

/// The double-ket `|X⟩⟩` of an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct VecOperator {
    pub dim_out: usize,
    pub dim_in: usize,
    pub amplitudes: DVector<C64>,
}

pub fn vectorize(x: &Operator) -> VecOperator {
    let (r, c) = (x.rows(), x.cols());
    VecOperator {
        dim_out: r,
        dim_in: c,
        amplitudes: DVector::from_fn(r * c, |k, _| x.mat[(k / c, k % c)]),
    }
}

impl VecOperator {
    pub fn devectorize(&self) -> Operator {
        let c = self.dim_in;
        Operator::from_fn(self.dim_out, c, |m, n| self.amplitudes[m * c + n])
    }

    pub fn from_amplitudes(dim_out: usize, dim_in: usize, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != dim_out * dim_in {
            return Err(Error::Shape(format!(
                "{} amplitudes for a {dim_out}x{dim_in} operator",
                amplitudes.len()
            )));
        }
        Ok(Self { dim_out, dim_in, amplitudes })
    }

    /// `⟨⟨self|other⟩⟩` as an amplitude dot product.
    pub fn inner(&self, other: &VecOperator) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// The amplitudes as a column operator.
    pub fn as_column(&self) -> Operator {
        Operator::from_matrix(DMatrix::from_column_slice(self.amplitudes.len(), 1, self.amplitudes.as_slice()))
    }
}

/// `|A⟩⟩⟨⟨B|` as an operator on the vectorized space.
pub fn ket_bra(a: &Operator, b: &Operator) -> Operator {
    let va = vectorize(a).amplitudes;
    let vb = vectorize(b).amplitudes;
    Operator::from_matrix(&va * vb.adjoint())
}

/// Applies a superoperator matrix to an operator: `|S(X)⟩⟩ = S|X⟩⟩`.
pub fn apply_superoperator(s: &Operator, x: &Operator, rows: usize, cols: usize) -> Result<Operator> {
    let v = vectorize(x);
    if s.cols() != v.amplitudes.len() || s.rows() != rows * cols {
        return Err(Error::Shape(format!(
            "superoperator {}x{} on operator {}x{}",
            s.rows(),
            s.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let out = &s.mat * &v.amplitudes;
    Ok(VecOperator { dim_out: rows, dim_in: cols, amplitudes: out }.devectorize())
}

/// JSON wire format `{rows, cols, re: [...], im: [...]}` with row-major entries.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OperatorJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&Operator> for OperatorJson {
    fn from(x: &Operator) -> Self {
        let e = x.entries();
        Self {
            rows: x.rows(),
            cols: x.cols(),
            re: e.iter().map(|z| z.re).collect(),
            im: e.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<OperatorJson> for Operator {
    type Error = Error;
    fn try_from(j: OperatorJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(Error::Format(format!(
                "re has {} entries but im has {}",
                j.re.len(),
                j.im.len()
            )));
        }
        let entries: Vec<C64> = j.re.iter().zip(&j.im).map(|(&r, &i)| C64::new(r, i)).collect();
        Operator::from_row_slice(j.rows, j.cols, &entries)
    }
}

impl Serialize for Operator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = OperatorJson::deserialize(d)?;
        Operator::try_from(j).map_err(serde::de::Error::custom)
    }
}
