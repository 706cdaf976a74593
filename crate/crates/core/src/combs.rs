//! Quantum combs (Choi operators of circuit boards) and testers.
//!
//! A comb lives on wires `0, 1, …, 2N−1` in causal order: even wires are
//! inputs, odd wires outputs, tooth `k` maps wire `2k` to wire `2k+1`. Its
//! operator is stored with tensor factors in ascending wire order, which
//! differs from the output ⊗ input order of [`ChoiOperator`].

use serde::{Deserialize, Serialize};

use crate::devices::ChoiOperator;
use crate::error::{Error, Result};
use crate::frames::{expansion_map, DualFrame, Povm};
use crate::operator::{link_product, tol, vectorize, LabeledOperator, Operator, OperatorJson, SubsystemShape, C64};

/// Residuals of the recursive normalization `Tr_{2k−1} R⁽ᵏ⁾ = I_{2k−2} ⊗ R⁽ᵏ⁻¹⁾`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombDiagnostics {
    /// Smallest eigenvalue of `R`.
    pub min_eigenvalue: f64,
    /// Operator-norm residual for `k = N, N−1, …, 1`.
    pub residuals: Vec<f64>,
    pub passed: bool,
}

impl CombDiagnostics {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks positivity and the recursive normalization of an operator on
/// `dims[0] ⊗ … ⊗ dims[2N−1]`.
pub fn validate_comb(r: &Operator, dims: &[usize], n: usize, tol: f64) -> Result<CombDiagnostics> {
    if dims.len() != 2 * n {
        return Err(Error::Shape(format!("{} wire dimensions for a comb with {n} teeth", dims.len())));
    }
    let total: usize = dims.iter().product();
    if !r.is_square() || r.rows() != total {
        return Err(Error::Shape(format!("{}x{} operator on wires of total dimension {total}", r.rows(), r.cols())));
    }
    let min_eigenvalue = r.hermitian_part().min_eigenvalue();
    let mut residuals = Vec::with_capacity(n);
    let mut current = r.clone();
    for k in (1..=n).rev() {
        let wires = &dims[..2 * k];
        let t = current.partial_trace(&SubsystemShape::new(wires), &[2 * k - 1])?;
        let d_in = wires[2 * k - 2];
        let prev = if k == 1 {
            Operator::identity(1)
        } else {
            t.partial_trace(&SubsystemShape::new(&wires[..2 * k - 1]), &[2 * k - 2])?
                .scale_real(1.0 / d_in as f64)
        };
        residuals.push((&t - &prev.tensor(&Operator::identity(d_in))).op_norm());
        current = prev;
    }
    let passed = min_eigenvalue >= -tol && r.hermiticity_defect() <= tol && residuals.iter().all(|&x| x <= tol);
    Ok(CombDiagnostics { min_eigenvalue, residuals, passed })
}

/// A comb whose wires carry explicit labels; ascending label order is the
/// causal order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumComb {
    op: LabeledOperator,
}

impl QuantumComb {
    /// Wraps an operator on wires `0..dims.len()` without validating it.
    pub fn new(op: Operator, dims: &[usize]) -> Result<Self> {
        let wires: Vec<(u32, usize)> = dims.iter().enumerate().map(|(i, &d)| (i as u32, d)).collect();
        Self::from_labeled(LabeledOperator::new(op, SubsystemShape::labeled(&wires)?)?)
    }

    /// Requires an even number of wires and brings them to ascending order.
    pub fn from_labeled(op: LabeledOperator) -> Result<Self> {
        if !op.labels().len().is_multiple_of(2) {
            return Err(Error::Labels(format!("comb with an odd number of wires {:?}", op.labels())));
        }
        let mut sorted = op.labels().to_vec();
        sorted.sort_unstable();
        Ok(Self { op: op.reordered(&sorted)? })
    }

    /// One-tooth comb of a channel, from wire `input` to wire `output`.
    pub fn from_channel(c: &ChoiOperator, input: u32, output: u32) -> Result<Self> {
        if input >= output {
            return Err(Error::Labels(format!("input wire {input} must precede output wire {output}")));
        }
        Self::from_labeled(c.labeled(output, input))
    }

    /// Two-tooth comb of the network `a: 0 → (1, m)`, `b: (2, m) → 3`, where
    /// `a` has output `H_1 ⊗ H_m` and `b` has input `H_2 ⊗ H_m`.
    pub fn sequential(a: &ChoiOperator, b: &ChoiOperator, d_mem: usize) -> Result<Self> {
        if !a.d_out().is_multiple_of(d_mem) || !b.d_in().is_multiple_of(d_mem) {
            return Err(Error::Shape(format!("memory dimension {d_mem} does not divide the channel wires")));
        }
        const MEM: u32 = 100;
        let d1 = a.d_out() / d_mem;
        let d2 = b.d_in() / d_mem;
        let la = LabeledOperator::new(
            a.operator().clone(),
            SubsystemShape::labeled(&[(1, d1), (MEM, d_mem), (0, a.d_in())])?,
        )?;
        let lb = LabeledOperator::new(
            b.operator().clone(),
            SubsystemShape::labeled(&[(3, b.d_out()), (2, d2), (MEM, d_mem)])?,
        )?;
        Self::from_labeled(link_product(&la, &lb)?)
    }

    pub fn operator(&self) -> &Operator {
        &self.op.op
    }

    pub fn labeled(&self) -> &LabeledOperator {
        &self.op
    }

    pub fn labels(&self) -> &[u32] {
        self.op.labels()
    }

    pub fn dims(&self) -> &[usize] {
        self.op.shape.dims()
    }

    pub fn teeth(&self) -> usize {
        self.dims().len() / 2
    }

    pub fn validate(&self, tol: f64) -> Result<CombDiagnostics> {
        validate_comb(self.operator(), self.dims(), self.teeth(), tol)
    }

    /// Relabels the wires to `0..2N` keeping their order.
    pub fn canonical_labels(&self) -> Self {
        Self::new(self.operator().clone(), self.dims()).expect("even number of wires")
    }
}

/// Link product of two combs over every wire label they share.
pub fn comb_link(a: &QuantumComb, b: &QuantumComb) -> Result<QuantumComb> {
    if !a.labels().iter().any(|l| b.labels().contains(l)) {
        return Err(Error::Labels(format!("combs on {:?} and {:?} share no wire", a.labels(), b.labels())));
    }
    QuantumComb::from_labeled(link_product(&a.op, &b.op)?)
}

/// JSON layout `{dims, N, operator, order}`; `order` lists the wire labels.
#[derive(Serialize, Deserialize)]
struct CombJson {
    dims: Vec<usize>,
    #[serde(rename = "N")]
    n: usize,
    operator: OperatorJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<Vec<u32>>,
}

impl Serialize for QuantumComb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CombJson {
            dims: self.dims().to_vec(),
            n: self.teeth(),
            operator: OperatorJson::from(self.operator()),
            order: Some(self.labels().to_vec()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuantumComb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = CombJson::deserialize(d)?;
        if raw.dims.len() != 2 * raw.n {
            return Err(D::Error::custom(format!("{} wire dimensions for N = {}", raw.dims.len(), raw.n)));
        }
        let op = Operator::try_from(raw.operator).map_err(D::Error::custom)?;
        let labels = raw.order.unwrap_or_else(|| (0..raw.dims.len() as u32).collect());
        if labels.len() != raw.dims.len() {
            return Err(D::Error::custom("order and dims differ in length"));
        }
        let wires: Vec<(u32, usize)> = labels.into_iter().zip(raw.dims).collect();
        let shape = SubsystemShape::labeled(&wires).map_err(D::Error::custom)?;
        LabeledOperator::new(op, shape)
            .and_then(QuantumComb::from_labeled)
            .map_err(D::Error::custom)
    }
}

/// A single-slot tester `{Π_i}` on `out ⊗ in` with `Σ_i Π_i = I ⊗ σ`.
///
/// Outcome probabilities for a channel with Choi operator `R` are
/// `p_i = Tr[Π_i R]`; the transpose that the link product would introduce is
/// absorbed into the stored elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Tester {
    elements: Vec<Operator>,
    sigma: Operator,
    d_out: usize,
    d_in: usize,
}

impl Tester {
    pub fn new(elements: Vec<Operator>, d_out: usize, d_in: usize) -> Result<Self> {
        Self::with_tolerance(elements, d_out, d_in, 1e-9)
    }

    pub fn with_tolerance(elements: Vec<Operator>, d_out: usize, d_in: usize, tol: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPovm("tester without elements".into()));
        }
        let n = d_out * d_in;
        let mut sum = Operator::zeros(n, n);
        for (i, e) in elements.iter().enumerate() {
            if e.rows() != n || e.cols() != n {
                return Err(Error::Shape(format!("tester element {i} is {}x{}, expected {n}x{n}", e.rows(), e.cols())));
            }
            let h = e.hermiticity_defect();
            if h > tol {
                return Err(Error::NotHermitian(h));
            }
            let m = e.hermitian_part().min_eigenvalue();
            if m < -tol {
                return Err(Error::NotPositive(m));
            }
            sum += e;
        }
        let sigma = sum
            .partial_trace(&SubsystemShape::new(&[d_out, d_in]), &[0])?
            .scale_real(1.0 / d_out as f64)
            .hermitian_part();
        let residual = (&sum - &Operator::identity(d_out).tensor(&sigma)).op_norm();
        if residual > tol || (sigma.trace().re - 1.0).abs() > tol {
            return Err(Error::InvalidPovm(format!(
                "tester normalization residual {residual:.3e}, Tr σ = {:.6}",
                sigma.trace().re
            )));
        }
        Ok(Self { elements, sigma, d_out, d_in })
    }

    /// Prepare `ρ`, apply the channel, measure `M`: `Π_i = M_i ⊗ ρᵀ`.
    pub fn from_state_povm(rho: &Operator, povm: &Povm) -> Result<Self> {
        rho.check_density(tol::POSITIVITY)?;
        let rt = rho.transpose();
        let elements = povm.elements().iter().map(|m| m.tensor(&rt)).collect();
        Self::new(elements, povm.dim(), rho.dim())
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Operator {
        &self.elements[i]
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn sigma(&self) -> &Operator {
        &self.sigma
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    /// The elements as a frame on the operator space of `out ⊗ in`.
    pub fn frame_elements(&self) -> &[Operator] {
        &self.elements
    }

    /// Frame dual built from the pseudo-inverse of the frame operator. For an
    /// informationally complete tester this is the canonical dual; otherwise
    /// it expands exactly the operators in the span of the tester.
    pub fn frame_dual(&self) -> DualFrame {
        let lambda = expansion_map(&self.elements);
        let f = &lambda * &lambda.adjoint();
        let cols = &f.pinv_hermitian(tol::RANK) * &lambda;
        let n = self.d_out * self.d_in;
        DualFrame::new((0..self.len()).map(|l| Operator::from_fn(n, n, |m, k| cols.get(m * n + k, l))).collect())
    }
}

/// Born rule for testers, `p_i = Tr[Π_i R]`.
pub fn tester_probabilities(t: &Tester, r: &ChoiOperator) -> Result<Vec<f64>> {
    if r.d_out() != t.d_out || r.d_in() != t.d_in {
        return Err(Error::Shape(format!(
            "channel {}→{} for a tester on {}→{}",
            r.d_in(),
            r.d_out(),
            t.d_in,
            t.d_out
        )));
    }
    Ok(t.elements.iter().map(|p| p.expectation(r.operator()).re).collect())
}

/// Physical scheme for a tester: send half of `|√σᵀ⟩⟩` through the channel
/// and measure `P_i = Π^{−1/2} Π_i Π^{−1/2}` on the output and the reference.
#[derive(Clone, Debug)]
pub struct TesterRealization {
    /// Bipartite input vector on `in ⊗ ref`.
    pub input: Vec<C64>,
    /// Measurement on `out ⊗ ref`, complete on the support of `I ⊗ σ`.
    pub elements: Vec<Operator>,
    /// Projector onto the support of `I ⊗ σ`.
    pub support: Operator,
    d_out: usize,
    d_in: usize,
}

impl TesterRealization {
    pub fn input_state(&self) -> Operator {
        Operator::projector(&self.input)
    }

    /// Outcome probabilities obtained by running the scheme on a channel.
    pub fn probabilities(&self, r: &ChoiOperator) -> Result<Vec<f64>> {
        if r.d_out() != self.d_out || r.d_in() != self.d_in {
            return Err(Error::Shape("channel does not fit the realization".into()));
        }
        let out = r.apply_local(&self.input_state(), self.d_in)?;
        Ok(self.elements.iter().map(|p| p.expectation(&out).re).collect())
    }

    /// The measurement as a POVM, with the complement of the support
    /// appended as an extra outcome when `σ` is rank deficient.
    pub fn povm(&self) -> Result<Povm> {
        let n = self.support.rows();
        let rest = &Operator::identity(n) - &self.support;
        let mut elements = self.elements.clone();
        if rest.op_norm() > tol::ALGEBRAIC {
            elements.push(rest);
        }
        Povm::new(elements)
    }
}

pub fn realize_tester(t: &Tester) -> TesterRealization {
    let sqrt_sigma = t.sigma.sqrt_psd();
    // |√σᵀ⟩⟩ = (I ⊗ √σ)|I⟩⟩
    let input = vectorize(&sqrt_sigma.transpose()).amplitudes.iter().copied().collect();
    let big = Operator::identity(t.d_out).tensor(&t.sigma);
    let inv_sqrt = big.pinv_sqrt_psd(tol::RANK);
    let elements = t.elements.iter().map(|p| (&(&inv_sqrt * p) * &inv_sqrt).hermitian_part()).collect();
    TesterRealization { input, elements, support: big.support_projector(tol::RANK), d_out: t.d_out, d_in: t.d_in }
}

/// Result of expanding an operator over tester elements.
#[derive(Clone, Debug)]
pub struct TesterExpansion {
    /// `⟨⟨Δ_l|A⟩⟩`.
    pub coefficients: Vec<C64>,
    /// `‖A − Σ_l ⟨⟨Δ_l|A⟩⟩ Π_l‖_HS`.
    pub residual: f64,
}

/// Expands `A = Σ_l ⟨⟨Δ_l|A⟩⟩ Π_l` and reports the residual. `Δ` must act as
/// a dual on the span of the tester, `Σ_l ⟨⟨Δ_l|Π_j⟩⟩ Π_l = Π_j`; the residual
/// is then zero exactly for operators in that span.
pub fn tester_dual_expand(t: &Tester, duals: &DualFrame, a: &Operator) -> Result<TesterExpansion> {
    if duals.len() != t.len() {
        return Err(Error::Shape(format!("{} duals for {} tester elements", duals.len(), t.len())));
    }
    a.check_same_shape(&t.elements[0])?;
    let lambda = expansion_map(&t.elements);
    let gamma = duals.inverse_map();
    let defect = (&(&(&lambda * &gamma) * &lambda) - &lambda).op_norm();
    if defect > 1e-8 * lambda.op_norm().max(1.0) {
        return Err(Error::NotDual(defect));
    }
    let coefficients = duals.coefficients(a)?;
    let mut acc = Operator::zeros(a.rows(), a.cols());
    for (p, &c) in t.elements.iter().zip(&coefficients) {
        acc += &p.scale(c);
    }
    Ok(TesterExpansion { coefficients, residual: (&acc - a).hs_norm() })
}

#[derive(Serialize, Deserialize)]
struct TesterJson {
    elements: Vec<OperatorJson>,
    sigma: OperatorJson,
}

impl Serialize for Tester {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TesterJson { elements: self.elements.iter().map(OperatorJson::from).collect(), sigma: (&self.sigma).into() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tester {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = TesterJson::deserialize(d)?;
        let sigma = Operator::try_from(raw.sigma).map_err(D::Error::custom)?;
        let elements = raw
            .elements
            .into_iter()
            .map(Operator::try_from)
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        let d_in = sigma.rows();
        let n = elements.first().map_or(0, |e| e.rows());
        if d_in == 0 || n % d_in != 0 {
            return Err(D::Error::custom(format!("elements of size {n} do not match σ of size {d_in}")));
        }
        let t = Tester::new(elements, n / d_in, d_in).map_err(D::Error::custom)?;
        if (&t.sigma - &sigma).max_abs() > 1e-9 {
            return Err(D::Error::custom("stored σ does not match the tester normalization"));
        }
        Ok(t)
    }
}
