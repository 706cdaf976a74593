//! Channels as Choi operators, faithful states, and ancilla-assisted
//! tomography of channels and measurements.
//!
//! Choi operators are ordered output ⊗ input: `R = Σ_k |K_k⟩⟩⟨⟨K_k|` and
//! `C(ρ) = Tr_in[(I ⊗ ρᵀ) R]`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{canonical_dual, DualFrame, Povm};
use crate::operator::{
    link_product, moore_penrose, random_kraus, tol, vectorize, LabeledOperator, Operator, OperatorJson,
    SubsystemShape, C64,
};
use crate::processing::{
    build_dual, max_likelihood, observe, Counts, DualKind, Ensemble, MaxLikOptions, Picture, Shots,
};

/// Which normalization conditions a Choi operator satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiClass {
    /// Completely positive only.
    Operation,
    /// Trace preserving: `Tr_out R = I_in`.
    Channel,
    /// Trace preserving and unital: also `Tr_in R = I_out`.
    Unital,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiOperator {
    op: Operator,
    d_out: usize,
    d_in: usize,
    class: ChoiClass,
}

impl ChoiOperator {
    /// Wraps a PSD operator on `out ⊗ in`, classifying it at the default
    /// tolerance.
    pub fn new(op: Operator, d_out: usize, d_in: usize) -> Result<Self> {
        Self::with_tolerance(op, d_out, d_in, tol::POSITIVITY)
    }

    pub fn with_tolerance(op: Operator, d_out: usize, d_in: usize, tol: f64) -> Result<Self> {
        if op.rows() != d_out * d_in || !op.is_square() {
            return Err(Error::Shape(format!(
                "{}x{} operator for a {d_in}→{d_out} Choi operator",
                op.rows(),
                op.cols()
            )));
        }
        let op = op.checked_positive(tol)?;
        let mut c = Self { op, d_out, d_in, class: ChoiClass::Operation };
        c.class = if c.trace_preservation_residual() > tol {
            ChoiClass::Operation
        } else if d_in == d_out && c.unitality_residual() <= tol {
            ChoiClass::Unital
        } else {
            ChoiClass::Channel
        };
        Ok(c)
    }

    pub fn from_kraus(kraus: &[Operator]) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::Shape("no Kraus operators".into()))?;
        let (d_out, d_in) = (first.rows(), first.cols());
        let n = d_out * d_in;
        let mut r = DMatrix::zeros(n, n);
        for k in kraus {
            k.check_same_shape(first)?;
            let v = vectorize(k).amplitudes;
            r += &v * v.adjoint();
        }
        Self::new(Operator::from_matrix(r), d_out, d_in)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_kraus(&[Operator::identity(d)]).expect("identity is a channel")
    }

    pub fn unitary(u: &Operator) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u))
    }

    /// `D_p(X) = (1−p) X + (p/d) Tr[X] I`, whose Choi operator is
    /// `(1−p)|I⟩⟩⟨⟨I| + (p/d) I⊗I`. The map is self-adjoint, so both
    /// pictures give the same operator.
    pub fn depolarizing(p: f64, d: usize, picture: Picture) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Range(format!("depolarizing parameter {p} outside [0, 1]")));
        }
        let id = vectorize(&Operator::identity(d)).amplitudes;
        let ii = Operator::from_matrix(&id * id.adjoint());
        let r = &ii.scale_real(1.0 - p) + &Operator::identity(d * d).scale_real(p / d as f64);
        let c = Self::new(r, d, d)?;
        Ok(match picture {
            Picture::Schrodinger => c,
            Picture::Heisenberg => c.adjoint(),
        })
    }

    /// Random channel with `n` Kraus operators.
    pub fn random<R: Rng + ?Sized>(d_in: usize, d_out: usize, n: usize, rng: &mut R) -> Self {
        Self::from_kraus(&random_kraus(d_in, d_out, n, rng)).expect("random Kraus sets are trace preserving")
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn class(&self) -> ChoiClass {
        self.class
    }

    pub fn shape(&self) -> SubsystemShape {
        SubsystemShape::new(&[self.d_out, self.d_in])
    }

    /// The Choi operator on labeled wires.
    pub fn labeled(&self, out: u32, input: u32) -> LabeledOperator {
        let shape = SubsystemShape::labeled(&[(out, self.d_out), (input, self.d_in)]).expect("distinct labels");
        LabeledOperator::new(self.op.clone(), shape).expect("consistent shape")
    }

    /// `‖Tr_out R − I_in‖_op`.
    pub fn trace_preservation_residual(&self) -> f64 {
        let t = self.op.partial_trace(&self.shape(), &[0]).expect("valid shape");
        (&t - &Operator::identity(self.d_in)).op_norm()
    }

    /// `‖Tr_in R − I_out‖_op`.
    pub fn unitality_residual(&self) -> f64 {
        let t = self.op.partial_trace(&self.shape(), &[1]).expect("valid shape");
        (&t - &Operator::identity(self.d_out)).op_norm()
    }

    /// `C(ρ) = Tr_in[(I ⊗ ρᵀ) R]`.
    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        if rho.rows() != self.d_in || rho.cols() != self.d_in {
            return Err(Error::Shape(format!("input {}x{} for a channel on {}", rho.rows(), rho.cols(), self.d_in)));
        }
        let (o, i) = (self.d_out, self.d_in);
        let r = self.op.matrix();
        Ok(Operator::from_fn(o, o, |m, n| {
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..i {
                for a in 0..i {
                    acc += rho.get(b, a) * r[(m * i + b, n * i + a)];
                }
            }
            acc
        }))
    }

    /// Applies the channel to the first factor of a state on `in ⊗ anc`.
    pub fn apply_local(&self, state: &Operator, d_anc: usize) -> Result<Operator> {
        let shape = SubsystemShape::labeled(&[(0, self.d_in), (2, d_anc)])?;
        let s = LabeledOperator::new(state.clone(), shape)?;
        let out = link_product(&self.labeled(1, 0), &s)?;
        Ok(out.reordered(&[1, 2])?.op)
    }

    /// Superoperator matrix `S` with `|C(X)⟩⟩ = S|X⟩⟩`:
    /// `S[(m,n),(b,a)] = R[(m,b),(n,a)]`.
    pub fn superoperator(&self) -> Operator {
        let (o, i) = (self.d_out, self.d_in);
        let r = self.op.matrix();
        Operator::from_fn(o * o, i * i, |row, col| {
            let (m, n) = (row / o, row % o);
            let (b, a) = (col / i, col % i);
            r[(m * i + b, n * i + a)]
        })
    }

    /// Inverse of [`ChoiOperator::superoperator`].
    pub fn from_superoperator(s: &Operator, d_out: usize, d_in: usize) -> Result<Self> {
        if s.rows() != d_out * d_out || s.cols() != d_in * d_in {
            return Err(Error::Shape(format!("{}x{} superoperator for {d_in}→{d_out}", s.rows(), s.cols())));
        }
        let r = Operator::from_fn(d_out * d_in, d_out * d_in, |row, col| {
            let (m, b) = (row / d_in, row % d_in);
            let (n, a) = (col / d_in, col % d_in);
            s.get(m * d_out + n, b * d_in + a)
        });
        Self::new(r, d_out, d_in)
    }

    /// Choi operator of the adjoint (Heisenberg-picture) map.
    pub fn adjoint(&self) -> Self {
        Self::from_superoperator(&self.superoperator().adjoint(), self.d_in, self.d_out)
            .expect("adjoint of a CP map is CP")
    }

    /// Choi operator of `self ∘ first`, via the link product over the shared wire.
    pub fn after(&self, first: &ChoiOperator) -> Result<Self> {
        if first.d_out != self.d_in {
            return Err(Error::Labels(format!("cannot feed dimension {} into {}", first.d_out, self.d_in)));
        }
        let out = link_product(&self.labeled(2, 1), &first.labeled(1, 0))?;
        Self::new(out.reordered(&[2, 0])?.op, self.d_out, first.d_in)
    }
}

/// JSON layout `{dims: {d_out, d_in}, operator}`.
#[derive(Serialize, Deserialize)]
struct ChoiJson {
    dims: ChoiDims,
    operator: OperatorJson,
}

#[derive(Serialize, Deserialize)]
struct ChoiDims {
    d_out: usize,
    d_in: usize,
}

impl Serialize for ChoiOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChoiJson { dims: ChoiDims { d_out: self.d_out, d_in: self.d_in }, operator: OperatorJson::from(&self.op) }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChoiOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ChoiJson::deserialize(d)?;
        let op = Operator::try_from(raw.operator).map_err(serde::de::Error::custom)?;
        ChoiOperator::new(op, raw.dims.d_out, raw.dims.d_in).map_err(serde::de::Error::custom)
    }
}

/// A bipartite state `T` on `probe ⊗ ref` with invertible induced map
/// `𝒯(P) = Tr_probe[(P ⊗ I) T]`.
#[derive(Clone, Debug)]
pub struct FaithfulState {
    state: Operator,
    d_probe: usize,
    d_ref: usize,
    map: Operator,
    inverse: Operator,
    smallest_singular_value: f64,
    condition_number: f64,
}

/// Result of [`is_faithful`]: either the accepted state or the reason for
/// rejection.
#[derive(Clone, Debug)]
pub enum Faithfulness {
    Faithful(FaithfulState),
    Rejected { smallest_singular_value: f64 },
}

impl Faithfulness {
    pub fn is_faithful(&self) -> bool {
        matches!(self, Self::Faithful(_))
    }

    pub fn into_state(self) -> Result<FaithfulState> {
        match self {
            Self::Faithful(t) => Ok(t),
            Self::Rejected { smallest_singular_value } => Err(Error::NotFaithful(smallest_singular_value)),
        }
    }
}

fn induced_map(t: &Operator, d_probe: usize, d_ref: usize) -> Operator {
    let m = t.matrix();
    // 𝒯(E_ba)_{ij} = T[(a,i),(b,j)]
    Operator::from_fn(d_ref * d_ref, d_probe * d_probe, |row, col| {
        let (i, j) = (row / d_ref, row % d_ref);
        let (b, a) = (col / d_probe, col % d_probe);
        m[(a * d_ref + i, b * d_ref + j)]
    })
}

/// Accepts `T` iff the smallest singular value of `𝒯` exceeds `tol`.
pub fn is_faithful(t: &Operator, d_probe: usize, d_ref: usize, tol: f64) -> Result<Faithfulness> {
    if t.rows() != d_probe * d_ref || !t.is_square() {
        return Err(Error::Shape(format!("{}x{} state on {d_probe}⊗{d_ref}", t.rows(), t.cols())));
    }
    t.check_density(tol::POSITIVITY)?;
    let map = induced_map(t, d_probe, d_ref);
    let sv = map.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = if d_ref < d_probe { 0.0 } else { sv.iter().copied().fold(f64::INFINITY, f64::min) };
    if smin <= tol {
        return Ok(Faithfulness::Rejected { smallest_singular_value: smin });
    }
    let inverse = moore_penrose(&map, tol);
    Ok(Faithfulness::Faithful(FaithfulState {
        state: t.clone(),
        d_probe,
        d_ref,
        map,
        inverse,
        smallest_singular_value: smin,
        condition_number: smax / smin,
    }))
}

impl FaithfulState {
    /// `|I⟩⟩⟨⟨I| / d`.
    pub fn maximally_entangled(d: usize) -> Self {
        let id = vectorize(&Operator::identity(d)).amplitudes;
        let t = Operator::from_matrix(&id * id.adjoint()).scale_real(1.0 / d as f64);
        is_faithful(&t, d, d, 1e-12)
            .and_then(Faithfulness::into_state)
            .expect("the maximally entangled state is faithful")
    }

    pub fn state(&self) -> &Operator {
        &self.state
    }

    pub fn d_probe(&self) -> usize {
        self.d_probe
    }

    pub fn d_ref(&self) -> usize {
        self.d_ref
    }

    pub fn smallest_singular_value(&self) -> f64 {
        self.smallest_singular_value
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// `𝒯(P) = Tr_probe[(P ⊗ I) T]`.
    pub fn map(&self, p: &Operator) -> Result<Operator> {
        crate::operator::apply_superoperator(&self.map, p, self.d_ref, self.d_ref)
    }

    pub fn invert(&self, y: &Operator) -> Result<Operator> {
        crate::operator::apply_superoperator(&self.inverse, y, self.d_probe, self.d_probe)
    }

    /// Reduced state on the reference, `Tr_probe T`.
    pub fn reference_state(&self) -> Operator {
        self.state
            .partial_trace(&SubsystemShape::new(&[self.d_probe, self.d_ref]), &[0])
            .expect("valid shape")
    }
}

/// Channel tomography with a faithful input: the channel acts on the probe,
/// the output on `out ⊗ ref` is measured with an IC POVM, and the linear
/// map `R ↦ (C ⊗ I)(T)` is inverted on the averaging estimate.
#[derive(Clone, Debug)]
pub struct ProcessTomography {
    faithful: FaithfulState,
    d_out: usize,
    povm: Povm,
    dual: DualFrame,
    inverse: Operator,
}

/// One tomographic reconstruction.
#[derive(Clone, Debug)]
pub struct ProcessEstimate {
    /// Estimated Choi operator (not projected onto the physical set).
    pub choi: Operator,
    pub counts: Option<Counts>,
}

impl ProcessTomography {
    /// `povm` acts on `out ⊗ ref`. The optimal dual is taken for the output
    /// of the completely depolarizing channel.
    pub fn new(faithful: &FaithfulState, d_out: usize, povm: Povm, dual: DualKind) -> Result<Self> {
        let d_in = faithful.d_probe;
        let d_ref = faithful.d_ref;
        if povm.dim() != d_out * d_ref {
            return Err(Error::Shape(format!("POVM on {} for an output on {d_out}⊗{d_ref}", povm.dim())));
        }
        let reference = Ensemble::single(
            Operator::identity(d_out).scale_real(1.0 / d_out as f64).tensor(&faithful.reference_state()),
        )?;
        let dual = build_dual(&povm, dual, &reference)?;
        let t = Self { faithful: faithful.clone(), d_out, povm, dual, inverse: Operator::zeros(1, 1) };
        let n_in = d_out * d_in;
        let n_out = d_out * d_ref;
        let mut cols = Vec::with_capacity(n_in * n_in);
        for r in 0..n_in {
            for c in 0..n_in {
                let e = Operator::matrix_unit(n_in, n_in, r, c);
                cols.push(vectorize(&t.output_of(&e)?).amplitudes);
            }
        }
        let forward = Operator::from_matrix(DMatrix::from_fn(n_out * n_out, n_in * n_in, |row, col| cols[col][row]));
        let smax = forward.singular_values().into_iter().fold(0.0, f64::max);
        Ok(Self { inverse: moore_penrose(&forward, tol::RANK * smax), ..t })
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn dual(&self) -> &DualFrame {
        &self.dual
    }

    /// `(C ⊗ I)(T) = R * T` for an arbitrary operator `R` on `out ⊗ in`.
    fn output_of(&self, r: &Operator) -> Result<Operator> {
        let (o, i, f) = (self.d_out, self.faithful.d_probe, self.faithful.d_ref);
        let rl = LabeledOperator::new(r.clone(), SubsystemShape::labeled(&[(1, o), (0, i)])?)?;
        let tl = LabeledOperator::new(self.faithful.state.clone(), SubsystemShape::labeled(&[(0, i), (2, f)])?)?;
        Ok(link_product(&rl, &tl)?.reordered(&[1, 2])?.op)
    }

    pub fn output_state(&self, channel: &ChoiOperator) -> Result<Operator> {
        if channel.d_in() != self.faithful.d_probe || channel.d_out() != self.d_out {
            return Err(Error::Shape("channel dimensions do not match the tomography setup".into()));
        }
        self.output_of(channel.operator())
    }

    pub fn probabilities(&self, channel: &ChoiOperator) -> Result<Vec<f64>> {
        self.povm.probabilities(&self.output_state(channel)?.hermitian_part())
    }

    /// Choi estimate from outcome frequencies.
    pub fn reconstruct(&self, freqs: &[f64]) -> Result<Operator> {
        let s = self.dual.reconstruct(freqs)?;
        let n_in = self.d_out * self.faithful.d_probe;
        crate::operator::apply_superoperator(&self.inverse, &s, n_in, n_in)
    }

    pub fn run<R: Rng + ?Sized>(&self, channel: &ChoiOperator, shots: Shots, rng: &mut R) -> Result<ProcessEstimate> {
        let p = self.probabilities(channel)?;
        let (freqs, counts) = observe(&p, shots, rng)?;
        Ok(ProcessEstimate { choi: self.reconstruct(&freqs)?, counts })
    }
}

/// One-call process tomography with the standard product IC POVM on
/// `out ⊗ ref`.
pub fn process_tomography<R: Rng + ?Sized>(
    channel: &ChoiOperator,
    faithful: &FaithfulState,
    dual: DualKind,
    shots: Shots,
    rng: &mut R,
) -> Result<ProcessEstimate> {
    let povm = Povm::standard(channel.d_out())?.tensor(&Povm::standard(faithful.d_ref)?);
    ProcessTomography::new(faithful, channel.d_out(), povm, dual)?.run(channel, shots, rng)
}

/// Estimator for the conditional reference states in POVM tomography.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConditionalEstimator {
    /// Linear averaging with a dual of the analysis POVM.
    Averaging(DualKind),
    MaxLikelihood(MaxLikOptions),
}

impl Default for ConditionalEstimator {
    fn default() -> Self {
        Self::Averaging(DualKind::Optimal)
    }
}

#[derive(Clone, Debug)]
pub struct PovmEstimate {
    pub elements: Vec<Operator>,
    /// Estimated outcome rates `Tr[(P_i ⊗ I) T]`.
    pub rates: Vec<f64>,
    /// Outcomes never observed; their elements are returned as zero.
    pub unobserved: Vec<usize>,
    /// Joint counts, flattened as `i · |E| + k`.
    pub counts: Option<Counts>,
}

impl PovmEstimate {
    /// `‖Σ_i P̂_i − I‖_op`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.elements[0].rows();
        let mut acc = Operator::zeros(d, d);
        for e in &self.elements {
            acc += e;
        }
        (&acc - &Operator::identity(d)).op_norm()
    }
}

/// Dual of the analysis POVM used for the conditional reference states; the
/// optimal choice is tuned to the reference marginal `Tr_probe T`.
pub fn conditional_dual(analysis: &Povm, faithful: &FaithfulState, kind: DualKind) -> Result<DualFrame> {
    build_dual(analysis, kind, &Ensemble::single(faithful.reference_state().hermitian_part())?)
}

/// Joint outcome distribution `Tr[(M_i ⊗ E_k) T]`, flattened as `i · |E| + k`.
pub fn joint_probabilities(target: &Povm, faithful: &FaithfulState, analysis: &Povm) -> Result<Vec<f64>> {
    let mut joint = Vec::with_capacity(target.len() * analysis.len());
    for m in target.elements() {
        let cond = faithful.map(m)?.hermitian_part();
        for e in analysis.elements() {
            joint.push(cond.expectation(e).re.max(0.0));
        }
    }
    let total: f64 = joint.iter().sum();
    for p in &mut joint {
        *p /= total;
    }
    Ok(joint)
}

/// Measurement tomography: the unknown POVM acts on the probe of `T`, the
/// reference is measured with `analysis`, and each element is rebuilt as
/// `P̂_i = 𝒯⁻¹(rate_i · ρ̂_i)` from its conditional reference state.
pub fn povm_tomography<R: Rng + ?Sized>(
    target: &Povm,
    faithful: &FaithfulState,
    analysis: &Povm,
    estimator: ConditionalEstimator,
    shots: Shots,
    rng: &mut R,
) -> Result<PovmEstimate> {
    let (dp, dr) = (faithful.d_probe, faithful.d_ref);
    if target.dim() != dp || analysis.dim() != dr {
        return Err(Error::Shape(format!(
            "POVMs on {} and {} for a faithful state on {dp}⊗{dr}",
            target.dim(),
            analysis.dim()
        )));
    }
    let k = analysis.len();
    let joint = joint_probabilities(target, faithful, analysis)?;
    let (freqs, counts) = observe(&joint, shots, rng)?;

    let dual = match estimator {
        ConditionalEstimator::Averaging(kind) => {
            Some(conditional_dual(analysis, faithful, kind)?)
        }
        ConditionalEstimator::MaxLikelihood(_) => None,
    };
    let mut elements = Vec::with_capacity(target.len());
    let mut rates = Vec::with_capacity(target.len());
    let mut unobserved = Vec::new();
    for i in 0..target.len() {
        let row = &freqs[i * k..(i + 1) * k];
        let rate: f64 = row.iter().sum();
        rates.push(rate);
        if rate <= 0.0 {
            log::warn!("outcome {i} was never observed; its element is estimated as zero");
            unobserved.push(i);
            elements.push(Operator::zeros(dp, dp));
            continue;
        }
        let weighted = match (&dual, estimator) {
            (Some(q), _) => q.reconstruct(row)?,
            (None, ConditionalEstimator::MaxLikelihood(opts)) => {
                let row_counts = match &counts {
                    Some(c) => Counts::new(c.counts[i * k..(i + 1) * k].to_vec()),
                    // exact mode: scale frequencies to integers is lossy, so
                    // fall back on the averaging reconstruction
                    None => {
                        let q = canonical_dual(analysis)?;
                        elements.push(faithful.invert(&q.reconstruct(row)?)?);
                        continue;
                    }
                };
                let init = Operator::identity(dr).scale_real(1.0 / dr as f64);
                let fit = max_likelihood(analysis, &row_counts, &init, opts)?;
                fit.state.scale_real(rate)
            }
            (None, ConditionalEstimator::Averaging(_)) => unreachable!("averaging always builds a dual"),
        };
        elements.push(faithful.invert(&weighted)?);
    }
    Ok(PovmEstimate { elements, rates, unobserved, counts })
}


#[cfg(test)]
mod tomography_tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_process_tomography_recovers_choi() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = ChoiOperator::random(2, 2, 3, &mut rng);
        let t = FaithfulState::maximally_entangled(2);
        for kind in [DualKind::Canonical, DualKind::Optimal] {
            let est = process_tomography(&c, &t, kind, Shots::Exact, &mut rng).unwrap();
            assert!((&est.choi - c.operator()).max_abs() < 1e-10);
        }
    }

    #[test]
    fn exact_povm_tomography_recovers_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let target = Povm::random_ic(2, 4, &mut rng).unwrap();
        let t = FaithfulState::maximally_entangled(2);
        for est in [
            ConditionalEstimator::Averaging(DualKind::Canonical),
            ConditionalEstimator::Averaging(DualKind::Optimal),
            ConditionalEstimator::MaxLikelihood(Default::default()),
        ] {
            let r = povm_tomography(&target, &t, &Povm::pauli6(), est, Shots::Exact, &mut rng).unwrap();
            for (a, b) in r.elements.iter().zip(target.elements()) {
                assert!((a - b).max_abs() < 1e-10);
            }
            assert!(r.completeness_residual() < 1e-10);
        }
    }

    #[test]
    fn sampled_maxlik_povm_tomography_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let t = FaithfulState::maximally_entangled(2);
        let r = povm_tomography(
            &Povm::computational(2),
            &t,
            &Povm::pauli6(),
            ConditionalEstimator::MaxLikelihood(Default::default()),
            Shots::Finite(20_000),
            &mut rng,
        )
        .unwrap();
        assert!((&r.elements[0] - &Operator::matrix_unit(2, 2, 0, 0)).max_abs() < 0.05);
        assert!(r.elements.iter().all(|e| e.min_eigenvalue() > -1e-9));
    }

    #[test]
    fn composition_via_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = ChoiOperator::random(2, 3, 2, &mut rng);
        let b = ChoiOperator::random(3, 2, 2, &mut rng);
        let ba = b.after(&a).unwrap();
        let rho = crate::operator::random_density(2, &mut rng);
        let direct = b.apply(&a.apply(&rho).unwrap()).unwrap();
        assert!((&ba.apply(&rho).unwrap() - &direct).max_abs() < 1e-12);
        let local = a.apply_local(&rho.tensor(&Operator::identity(1)), 1).unwrap();
        assert!((&local - &a.apply(&rho).unwrap()).max_abs() < 1e-12);
    }
}
