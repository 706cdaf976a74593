//! Covariant testers for channel tomography and their figure of merit.
//!
//! For a tester `{Π_i}` on `out ⊗ in` and the completely depolarizing prior
//! `R_E = I ⊗ I / d`, the minimal averaged error is `η = Tr[Y‡ G]` with
//! `Y = Σ_i d |Π_i⟩⟩⟨⟨Π_i| / Tr Π_i`. Twirling by `W = U ⊗ V ⊗ U* ⊗ V*` makes
//! `Ỹ = P₁ + A P₂ + B P₃ + C P₄`, where the `P_k` project onto the four
//! isotypic components of the operator space:
//!
//! - `P₁`: multiples of `I ⊗ I`,
//! - `P₂`: `X ⊗ I` with `X` traceless,
//! - `P₃`: `I ⊗ X` with `X` traceless,
//! - `P₄`: operators with both partial traces zero.
//!
//! Vectorized operators on `out ⊗ in` have factors ordered
//! `(out, in, out', in')`.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combs::Tester;
use crate::error::{Error, Result};
use crate::operator::design::UnitaryDesign;
use crate::operator::{haar_random_unitary, tol, vectorize, Operator, SubsystemShape, C64};

/// The set of transformations being reconstructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubspaceKind {
    /// All quantum operations.
    #[serde(rename = "qops")]
    QuantumOperations,
    /// Trace-preserving channels.
    #[serde(rename = "channels")]
    Channels,
    /// Unital channels.
    #[serde(rename = "unital")]
    UnitalChannels,
    /// States: only the `P₁ + P₂` components are estimated.
    #[serde(rename = "states")]
    States,
    /// POVMs: only the `P₁ + P₃` components are estimated.
    #[serde(rename = "povms")]
    Povms,
}

impl SubspaceKind {
    pub const ALL: [SubspaceKind; 5] =
        [Self::QuantumOperations, Self::Channels, Self::UnitalChannels, Self::States, Self::Povms];

    pub fn name(self) -> &'static str {
        match self {
            Self::QuantumOperations => "qops",
            Self::Channels => "channels",
            Self::UnitalChannels => "unital",
            Self::States => "states",
            Self::Povms => "povms",
        }
    }

    /// Weights of `P₁ … P₄` in the projector onto the subspace.
    pub fn projector_weights(self) -> [f64; 4] {
        match self {
            Self::QuantumOperations => [1.0, 1.0, 1.0, 1.0],
            Self::Channels => [1.0, 1.0, 0.0, 1.0],
            Self::UnitalChannels => [1.0, 0.0, 0.0, 1.0],
            Self::States => [1.0, 1.0, 0.0, 0.0],
            Self::Povms => [1.0, 0.0, 1.0, 0.0],
        }
    }
}

impl fmt::Display for SubspaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubspaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kind {s:?}; expected qops, channels, unital, states or povms")))
    }
}

/// `Ω = |I⟩⟩⟨⟨I| / d` on `C^d ⊗ C^d`.
fn omega(d: usize) -> Operator {
    let v = vectorize(&Operator::identity(d)).amplitudes;
    Operator::from_matrix(&v * v.adjoint()).scale_real(1.0 / d as f64)
}

/// The four projectors on the vectorized operator space of `out ⊗ in`.
#[derive(Clone, Debug)]
pub struct SchurProjectors {
    pub d_out: usize,
    pub d_in: usize,
    pub projectors: [Operator; 4],
}

impl SchurProjectors {
    pub fn new(d_out: usize, d_in: usize) -> Self {
        let (wo, wi) = (omega(d_out), omega(d_in));
        let (io, ii) = (Operator::identity(d_out * d_out), Operator::identity(d_in * d_in));
        let (co, ci) = (&io - &wo, &ii - &wi);
        // built on (out, out', in, in') and brought to (out, in, out', in')
        let shape = SubsystemShape::new(&[d_out, d_out, d_in, d_in]);
        let arrange = |x: Operator| x.permute_subsystems(&shape, &[0, 2, 1, 3]).expect("four factors");
        Self {
            d_out,
            d_in,
            projectors: [
                arrange(wo.tensor(&wi)),
                arrange(co.tensor(&wi)),
                arrange(wo.tensor(&ci)),
                arrange(co.tensor(&ci)),
            ],
        }
    }

    pub fn square(d: usize) -> Self {
        Self::new(d, d)
    }

    pub fn ranks(&self) -> [usize; 4] {
        let (a, b) = (self.d_out * self.d_out - 1, self.d_in * self.d_in - 1);
        [1, a, b, a * b]
    }

    /// `Σ_k w_k P_k`.
    pub fn combination(&self, w: [f64; 4]) -> Operator {
        let n = self.projectors[0].rows();
        let mut acc = Operator::zeros(n, n);
        for (p, &c) in self.projectors.iter().zip(&w) {
            if c != 0.0 {
                acc += &p.scale_real(c);
            }
        }
        acc
    }

    /// Projector onto the span of a subspace of transformations.
    pub fn subspace(&self, kind: SubspaceKind) -> Operator {
        self.combination(kind.projector_weights())
    }

    /// `Tr[X P_k] / rank(P_k)` for each `k`; for a twirl-invariant `X` these
    /// are its coefficients in the projector basis.
    pub fn coefficients(&self, x: &Operator) -> [f64; 4] {
        let ranks = self.ranks();
        std::array::from_fn(|k| {
            if ranks[k] == 0 {
                0.0
            } else {
                x.expectation(&self.projectors[k]).re / ranks[k] as f64
            }
        })
    }
}

/// `⟨⟨Π|P_k|Π⟩⟩` for an operator `Π` on `out ⊗ in`, from partial traces.
pub fn schur_overlaps(pi: &Operator, d_out: usize, d_in: usize) -> Result<[f64; 4]> {
    let shape = SubsystemShape::new(&[d_out, d_in]);
    let t_in = pi.partial_trace(&shape, &[1])?;
    let t_out = pi.partial_trace(&shape, &[0])?;
    let tr = pi.trace().norm_sqr() / (d_out * d_in) as f64;
    let t1 = t_in.hs_norm().powi(2) / d_in as f64;
    let t2 = t_out.hs_norm().powi(2) / d_out as f64;
    let all = pi.hs_norm().powi(2);
    Ok([tr, t1 - tr, t2 - tr, all - t1 - t2 + tr])
}

/// Coefficients of `Ỹ = P₁ + A P₂ + B P₃ + C P₄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurCoefficients {
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SchurCoefficients {
    /// Closed-form coefficients of the twirled `Y` for seeds `Π_i` with
    /// `Σ_i Tr Π_i = d`:
    /// `A = (Σ Tr[(Tr_in Π_i)²]/Tr Π_i − 1)/(d²−1)`, `B` likewise with
    /// `Tr_out`, `C = (Σ d Tr[Π_i²]/Tr Π_i − (d²−1)(A+B) − 1)/(d²−1)²`.
    pub fn from_seed_operators(seeds: &[Operator], d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Range(format!("dimension {d} < 2")));
        }
        let shape = SubsystemShape::new(&[d, d]);
        let mut total = 0.0;
        let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
        for p in seeds {
            if p.rows() != d * d || !p.is_square() {
                return Err(Error::Shape(format!("seed {}x{} on a {d}⊗{d} space", p.rows(), p.cols())));
            }
            let t = p.trace().re;
            if t <= 0.0 {
                return Err(Error::InvalidPovm("seed with non-positive trace".into()));
            }
            total += t;
            sa += p.partial_trace(&shape, &[1])?.hs_norm().powi(2) / t;
            sb += p.partial_trace(&shape, &[0])?.hs_norm().powi(2) / t;
            sc += d as f64 * p.hs_norm().powi(2) / t;
        }
        if (total - d as f64).abs() > 1e-9 {
            return Err(Error::InvalidPovm(format!("seed traces sum to {total}, expected {d}")));
        }
        let k = (d * d - 1) as f64;
        let a = (sa - 1.0) / k;
        let b = (sb - 1.0) / k;
        let c = (sc - k * (a + b) - 1.0) / (k * k);
        Ok(Self { d, a, b, c })
    }

    /// Reads the coefficients off a twirl-invariant operator.
    pub fn from_operator(y: &Operator, d: usize) -> Self {
        let [_, a, b, c] = SchurProjectors::square(d).coefficients(y);
        Self { d, a, b, c }
    }

    /// `P₁ + A P₂ + B P₃ + C P₄`.
    pub fn operator(&self) -> Operator {
        SchurProjectors::square(self.d).combination([1.0, self.a, self.b, self.c])
    }

    /// `Tr[Ỹ‡ G]` for `G = Σ g_k P_k`:
    /// `g₁ + (d²−1)(g₂/A + g₃/B + (d²−1) g₄/C)`; `+∞` when `G` weighs a
    /// component on which `Ỹ` vanishes.
    pub fn eta(&self, g: [f64; 4]) -> f64 {
        let k = (self.d * self.d - 1) as f64;
        let mut acc = g[0];
        for (gk, coef, mult) in [(g[1], self.a, k), (g[2], self.b, k), (g[3], self.c, k * k)] {
            if gk == 0.0 {
                continue;
            }
            if coef <= tol::RANK {
                return f64::INFINITY;
            }
            acc += mult * gk / coef;
        }
        acc
    }

    pub fn eta_for(&self, kind: SubspaceKind) -> f64 {
        self.eta(kind.projector_weights())
    }

    /// Smallest eigenvalue of `Ỹ`, non-negative for a valid tester.
    pub fn min_coefficient(&self) -> f64 {
        1.0f64.min(self.a).min(self.b).min(self.c)
    }
}

/// `Y = Σ_i d |Π_i⟩⟩⟨⟨Π_i| / Tr Π_i` for the elements of a tester.
pub fn tester_y(elements: &[Operator], d: usize) -> Operator {
    let n = elements[0].rows() * elements[0].cols();
    let mut y = Operator::zeros(n, n);
    for p in elements {
        let t = p.trace().re;
        if t > 0.0 {
            let v = vectorize(p).amplitudes;
            y += &Operator::from_matrix(&v * v.adjoint()).scale_real(d as f64 / t);
        }
    }
    y
}

fn seed_operators(seeds: &[(f64, Operator)], d: usize) -> Result<Vec<Operator>> {
    let mut out = Vec::with_capacity(seeds.len());
    let mut total = 0.0;
    for (alpha, psi) in seeds {
        if !(*alpha > 0.0) {
            return Err(Error::Range(format!("seed weight {alpha} must be positive")));
        }
        if psi.rows() != d || psi.cols() != d {
            return Err(Error::Shape(format!("seed {}x{} for dimension {d}", psi.rows(), psi.cols())));
        }
        let norm = psi.hs_norm().powi(2);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("seed with Tr[ΨΨ†] = {norm}")));
        }
        total += alpha;
        let v = vectorize(psi).amplitudes;
        out.push(Operator::from_matrix(&v * v.adjoint()).scale_real(*alpha));
    }
    if (total - d as f64).abs() > 1e-9 {
        return Err(Error::InvalidPovm(format!("seed weights sum to {total}, expected {d}")));
    }
    Ok(out)
}

/// Coefficients of the twirled `Y` for rank-one seeds `Π_i = α_i |Ψ_i⟩⟩⟨⟨Ψ_i|`
/// with `Σ α_i = d` and `Tr[Ψ_i Ψ_i†] = 1`.
pub fn covariant_y_from_seeds(seeds: &[(f64, Operator)], d: usize) -> Result<SchurCoefficients> {
    SchurCoefficients::from_seed_operators(&seed_operators(seeds, d)?, d)
}

/// `Y` of the (untwirled) seed set itself.
pub fn seed_y(seeds: &[(f64, Operator)], d: usize) -> Result<Operator> {
    Ok(tester_y(&seed_operators(seeds, d)?, d))
}

/// How `G` is specified.
#[derive(Clone, Debug)]
pub enum WeightedObservables {
    /// `G = Σ_n q_n |X_n⟩⟩⟨⟨X_n|`.
    List(Vec<(Operator, f64)>),
    /// `G = Σ_k g_k P_k` on `C^d ⊗ C^d`.
    Symmetric { d: usize, g: [f64; 4] },
}

impl WeightedObservables {
    pub fn operator(&self) -> Result<Operator> {
        match self {
            Self::List(items) => {
                let first = items.first().ok_or_else(|| Error::Shape("no observables".into()))?;
                let n = first.0.rows() * first.0.cols();
                let mut g = Operator::zeros(n, n);
                for (x, q) in items {
                    if !(*q > 0.0) {
                        return Err(Error::Range(format!("observable weight {q} must be positive")));
                    }
                    x.check_same_shape(&first.0)?;
                    let v = vectorize(x).amplitudes;
                    g += &Operator::from_matrix(&v * v.adjoint()).scale_real(*q);
                }
                Ok(g)
            }
            Self::Symmetric { d, g } => Ok(SchurProjectors::square(*d).combination(*g)),
        }
    }

    pub fn subspace(kind: SubspaceKind, d: usize) -> Self {
        Self::Symmetric { d, g: kind.projector_weights() }
    }
}

/// `η = Tr[Y‡ G]`, or `+∞` when `G` has support outside the range of `Y`.
pub fn eta(y: &Operator, g: &WeightedObservables) -> Result<f64> {
    eta_operator(y, &g.operator()?)
}

pub fn eta_operator(y: &Operator, g: &Operator) -> Result<f64> {
    y.check_same_shape(g)?;
    let e = y.hermitian_part().eigh();
    let ymax = e.max_abs_value();
    let cut = tol::RANK * ymax.max(f64::MIN_POSITIVE);
    let support = e.map(|v| if v > cut { 1.0 } else { 0.0 });
    let outside = &Operator::identity(y.rows()) - &support;
    let leak = (&(&outside * g) * &outside).op_norm();
    if leak > 1e-8 * g.op_norm().max(1.0) {
        log::debug!("G leaks into the kernel of Y by {leak:.3e}");
        return Ok(f64::INFINITY);
    }
    let yp = e.map(|v| if v > cut { 1.0 / v } else { 0.0 });
    Ok(yp.hs_inner(g)?.re)
}

fn check_dimension(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Range(format!("dimension {d} < 2")));
    }
    Ok(())
}

/// η of the single-parameter family `B = A`, `C = (1−2A)/(d²−1)`.
pub fn eta_subspace(a: f64, d: usize, kind: SubspaceKind) -> Result<f64> {
    check_dimension(d)?;
    if !(0.0..0.5).contains(&a) {
        return Err(Error::Range(format!("A = {a} outside [0, 1/2)")));
    }
    let k = (d * d - 1) as f64;
    let c = (1.0 - 2.0 * a) / k;
    Ok(SchurCoefficients { d, a, b: a, c }.eta_for(kind))
}

/// Minimizer of [`eta_subspace`] over admissible `A`.
pub fn optimal_a(kind: SubspaceKind, d: usize) -> f64 {
    let d2 = (d * d) as f64;
    match kind {
        SubspaceKind::QuantumOperations => 1.0 / (d2 + 1.0),
        SubspaceKind::Channels => 1.0 / (SQRT_2 * (d2 - 1.0) + 2.0),
        SubspaceKind::UnitalChannels => 0.0,
        SubspaceKind::States | SubspaceKind::Povms => 1.0 / (d as f64 + 1.0),
    }
}

/// Closed-form minimum of η.
pub fn optimal_eta_bound(kind: SubspaceKind, d: usize) -> f64 {
    let x = d as f64;
    let (x2, x4, x6) = (x * x, x.powi(4), x.powi(6));
    match kind {
        SubspaceKind::QuantumOperations => x6 + x4 - x2,
        SubspaceKind::Channels => {
            x6 + (2.0 * SQRT_2 - 3.0) * x4 + (5.0 - 4.0 * SQRT_2) * x2 + 2.0 * (SQRT_2 - 1.0)
        }
        SubspaceKind::UnitalChannels => (x2 - 1.0).powi(3) + 1.0,
        SubspaceKind::States | SubspaceKind::Povms => x * x2 + x2 - x,
    }
}

/// η for tomography of states or POVMs, `d³ + d² − d`.
pub fn special_case_eta(kind: SubspaceKind, d: usize) -> Result<f64> {
    check_dimension(d)?;
    match kind {
        SubspaceKind::States | SubspaceKind::Povms => Ok(optimal_eta_bound(kind, d)),
        other => Err(Error::Config(format!("{other} is not a state or POVM special case"))),
    }
}

/// Mixing parameter of the optimal seed.
pub fn optimal_beta(kind: SubspaceKind, d: usize) -> f64 {
    let x = d as f64;
    let x2 = x * x;
    match kind {
        SubspaceKind::QuantumOperations => ((x + 1.0) / (x2 + 1.0)).sqrt(),
        SubspaceKind::Channels => ((x + 1.0) / (2.0 + SQRT_2 * (x2 - 1.0))).sqrt(),
        SubspaceKind::UnitalChannels => 0.0,
        SubspaceKind::States | SubspaceKind::Povms => 1.0,
    }
}

/// `Tr[(ΨΨ†)²]` reached by the optimal seed.
pub fn target_purity(kind: SubspaceKind, d: usize) -> f64 {
    let x = d as f64;
    let x2 = x * x;
    match kind {
        SubspaceKind::QuantumOperations => 2.0 * x / (x2 + 1.0),
        SubspaceKind::Channels => (SQRT_2 * (x2 - 1.0) + 1.0 + x2) / (x * (SQRT_2 * (x2 - 1.0) + 2.0)),
        SubspaceKind::UnitalChannels => 1.0 / x,
        SubspaceKind::States | SubspaceKind::Povms => 1.0,
    }
}

/// A single seed `Π₀ = d |Ψ⟩⟩⟨⟨Ψ|` with `Ψ = [(1−β) I/d + β |ψ⟩⟨ψ|]^{1/2}`.
#[derive(Clone, Debug, Serialize)]
pub struct OptimalSeed {
    pub kind: SubspaceKind,
    pub d: usize,
    pub beta: f64,
    pub fiducial: Vec<C64>,
    #[serde(skip)]
    pub psi: Operator,
}

impl OptimalSeed {
    pub fn with_beta(kind: SubspaceKind, d: usize, beta: f64, fiducial: &[C64]) -> Result<Self> {
        check_dimension(d)?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Range(format!("β = {beta} outside [0, 1]")));
        }
        if fiducial.len() != d {
            return Err(Error::Shape(format!("fiducial of length {} for dimension {d}", fiducial.len())));
        }
        let norm: f64 = fiducial.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("fiducial state has norm² {norm}")));
        }
        let mix = &Operator::identity(d).scale_real((1.0 - beta) / d as f64) + &Operator::projector(fiducial).scale_real(beta);
        Ok(Self { kind, d, beta, fiducial: fiducial.to_vec(), psi: mix.sqrt_psd() })
    }

    /// `Tr[(ΨΨ†)²]`.
    pub fn purity(&self) -> f64 {
        let r = &self.psi * &self.psi.adjoint();
        r.hs_norm().powi(2)
    }

    /// `Π₀ = d |Ψ⟩⟩⟨⟨Ψ|` on `out ⊗ in`.
    pub fn element(&self) -> Operator {
        let v = vectorize(&self.psi).amplitudes;
        Operator::from_matrix(&v * v.adjoint()).scale_real(self.d as f64)
    }

    pub fn coefficients(&self) -> Result<SchurCoefficients> {
        covariant_y_from_seeds(&[(self.d as f64, self.psi.clone())], self.d)
    }
}

/// The optimal seed for `kind`, built around the pure state `fiducial`.
pub fn optimal_seed(kind: SubspaceKind, d: usize, fiducial: &[C64]) -> Result<OptimalSeed> {
    OptimalSeed::with_beta(kind, d, optimal_beta(kind, d), fiducial)
}

/// `|0⟩`, a convenient fiducial.
pub fn ground_state(d: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[0] = C64::new(1.0, 0.0);
    v
}

/// Average of `W X W†` over `W = U ⊗ V ⊗ U* ⊗ V*` with `U`, `V` from the
/// design, performed as two sequential one-sided twirls.
pub fn twirl(x: &Operator, design: &UnitaryDesign) -> Result<Operator> {
    let d = design.dim;
    if x.rows() != d.pow(4) || !x.is_square() {
        return Err(Error::Shape(format!("{}x{} operator for a twirl in dimension {d}", x.rows(), x.cols())));
    }
    let id = Operator::identity(d);
    let left: Vec<Operator> =
        design.unitaries.iter().map(|u| Operator::tensor_all([u, &id, &u.conj(), &id])).collect();
    let right: Vec<Operator> =
        design.unitaries.iter().map(|v| Operator::tensor_all([&id, v, &id, &v.conj()])).collect();
    let once = average_conjugation(x, &left);
    Ok(average_conjugation(&once, &right))
}

fn average_conjugation(x: &Operator, ws: &[Operator]) -> Operator {
    let terms: Vec<Operator> = ws.par_iter().map(|w| &(w * x) * &w.adjoint()).collect();
    let mut acc = Operator::zeros(x.rows(), x.cols());
    for t in &terms {
        acc += t;
    }
    acc.scale_real(1.0 / ws.len() as f64)
}

/// Monte Carlo estimate of the Haar twirl from `samples` independent
/// pairs `(U, V)`; deterministic for a given seed.
pub fn twirl_haar(x: &Operator, d: usize, samples: usize, seed: u64) -> Result<Operator> {
    if x.rows() != d.pow(4) || !x.is_square() {
        return Err(Error::Shape(format!("{}x{} operator for a twirl in dimension {d}", x.rows(), x.cols())));
    }
    const CHUNK: usize = 2048;
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Operator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut acc = Operator::zeros(x.rows(), x.cols());
            for _ in 0..n {
                let u = haar_random_unitary(d, &mut rng);
                let v = haar_random_unitary(d, &mut rng);
                let w = Operator::tensor_all([&u, &v, &u.conj(), &v.conj()]);
                acc += &(&(&w * x) * &w.adjoint());
            }
            acc
        })
        .collect();
    let mut acc = Operator::zeros(x.rows(), x.cols());
    for p in &partial {
        acc += p;
    }
    Ok(acc.scale_real(1.0 / samples as f64))
}

/// Outcome of the informational-completeness check for a covariant tester.
#[derive(Clone, Debug, Serialize)]
pub struct IcReport {
    /// `⟨⟨Ψ|⟨⟨Ψ| P_k |Ψ⟩⟩|Ψ⟩⟩` for the normalized seed.
    pub overlaps: [f64; 4],
    /// Smallest eigenvalue of the twirled frame operator on the subspace.
    pub min_eigenvalue: f64,
    pub informationally_complete: bool,
}

/// Checks that the covariant tester generated by `Ψ` spans the operators of
/// `kind`: every projector in the subspace must have a nonzero overlap with
/// the seed, and the frame operator `F`, twirled over `design`, must be
/// invertible there.
pub fn check_ic_covariant(psi: &Operator, kind: SubspaceKind, design: &UnitaryDesign) -> Result<IcReport> {
    let d = psi.rows();
    if !psi.is_square() || design.dim != d {
        return Err(Error::Shape(format!("seed {}x{} with a design in dimension {}", psi.rows(), psi.cols(), design.dim)));
    }
    let v = vectorize(psi).amplitudes;
    let pi = Operator::from_matrix(&v * v.adjoint());
    let overlaps = schur_overlaps(&pi, d, d)?;
    let w = vectorize(&pi).amplitudes;
    let f = twirl(&Operator::from_matrix(&w * w.adjoint()), design)?;
    let sp = SchurProjectors::square(d);
    let q = sp.subspace(kind);
    let compressed = (&(&q * &f) * &q).hermitian_part();
    let rank: usize = kind.projector_weights().iter().zip(sp.ranks()).filter(|(w, _)| **w > 0.0).map(|(_, r)| r).sum();
    let mut ev = compressed.eigenvalues();
    ev.reverse();
    let min_eigenvalue = ev[rank - 1];
    let weights = kind.projector_weights();
    let overlaps_ok = overlaps.iter().zip(weights).all(|(o, w)| w == 0.0 || *o > 1e-12);
    Ok(IcReport { overlaps, min_eigenvalue, informationally_complete: overlaps_ok && min_eigenvalue > 1e-12 })
}

/// The covariant tester `Π_{g,h} = (U_g ⊗ V_h) Π₀ (U_g ⊗ V_h)† / |G|²` with
/// normalization `Σ Π_{g,h} = I ⊗ I / d`. Elements are indexed `g·|G| + h`.
pub fn build_optimal_tester(seed: &OptimalSeed, design: &UnitaryDesign) -> Result<Tester> {
    let d = seed.d;
    if design.dim != d {
        return Err(Error::Shape(format!("design in dimension {} for a seed in dimension {d}", design.dim)));
    }
    let ic = check_ic_covariant(&seed.psi, seed.kind, design)?;
    if !ic.informationally_complete {
        return Err(Error::NotInformationallyComplete(ic.min_eigenvalue));
    }
    let pi0 = seed.element();
    let n = design.len();
    let scale = 1.0 / (n * n) as f64;
    let mut elements = Vec::with_capacity(n * n);
    for u in &design.unitaries {
        for v in &design.unitaries {
            let w = u.tensor(v);
            elements.push((&(&w * &pi0) * &w.adjoint()).hermitian_part().scale_real(scale));
        }
    }
    Tester::new(elements, d, d)
}

/// One row of the optimal-setup table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: SubspaceKind,
    pub d: usize,
    #[serde(rename = "A_opt")]
    pub a_opt: f64,
    pub beta: f64,
    pub purity: f64,
    pub eta_bound: f64,
    pub eta_computed: f64,
    /// `|η_computed − η_bound| / η_bound`.
    pub residual: f64,
}

/// Evaluates the seed → coefficients → η pipeline against the closed form.
pub fn table_row(kind: SubspaceKind, d: usize) -> Result<TableRow> {
    let seed = optimal_seed(kind, d, &ground_state(d))?;
    let coef = seed.coefficients()?;
    let eta_computed = coef.eta_for(kind);
    let eta_bound = optimal_eta_bound(kind, d);
    Ok(TableRow {
        kind,
        d,
        a_opt: optimal_a(kind, d),
        beta: seed.beta,
        purity: seed.purity(),
        eta_bound,
        eta_computed,
        residual: ((eta_computed - eta_bound) / eta_bound).abs(),
    })
}

pub fn write_table_csv<W: Write>(rows: &[TableRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["kind", "d", "A_opt", "beta", "purity", "eta_bound", "eta_computed", "residual"])?;
    for r in rows {
        out.write_record([
            r.kind.name().to_string(),
            r.d.to_string(),
            r.a_opt.to_string(),
            r.beta.to_string(),
            r.purity.to_string(),
            r.eta_bound.to_string(),
            r.eta_computed.to_string(),
            r.residual.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A random pure state, for fiducials.
pub fn random_fiducial<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    crate::operator::random_pure_state(d, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projectors_resolve_identity() {
        for d in [2usize, 3] {
            let sp = SchurProjectors::square(d);
            let sum = sp.combination([1.0; 4]);
            assert!((&sum - &Operator::identity(d.pow(4))).max_abs() < 1e-12);
            for (k, p) in sp.projectors.iter().enumerate() {
                assert!((&(p * p) - p).max_abs() < 1e-12);
                assert!((p.trace().re - sp.ranks()[k] as f64).abs() < 1e-10);
            }
            let v = vectorize(&Operator::identity(d * d)).amplitudes;
            let p1 = Operator::from_matrix(&v * v.adjoint()).scale_real(1.0 / (d * d) as f64);
            assert!((&p1 - &sp.projectors[0]).max_abs() < 1e-14);
        }
    }

    #[test]
    fn p2_holds_traceless_out_times_identity() {
        let sp = SchurProjectors::square(2);
        let x = crate::operator::pauli::z().tensor(&Operator::identity(2));
        let v = vectorize(&x);
        let o = sp.projectors[1].matrix() * &v.amplitudes;
        assert!((o - &v.amplitudes).norm() < 1e-12);
    }

    #[test]
    fn overlaps_agree_with_projectors() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pi = crate::operator::random_density(4, &mut rng);
        let sp = SchurProjectors::square(2);
        let v = vectorize(&pi).amplitudes;
        let direct: Vec<f64> = sp.projectors.iter().map(|p| v.dotc(&(p.matrix() * &v)).re).collect();
        let fast = schur_overlaps(&pi, 2, 2).unwrap();
        for (a, b) in direct.iter().zip(fast) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_numbers() {
        assert!((eta_subspace(0.2, 2, SubspaceKind::QuantumOperations).unwrap() - 76.0).abs() < 1e-12);
        assert!((eta_subspace(0.0, 2, SubspaceKind::UnitalChannels).unwrap() - 28.0).abs() < 1e-12);
        let a = 1.0 / (3.0 * SQRT_2 + 2.0);
        let v = eta_subspace(a, 2, SubspaceKind::Channels).unwrap();
        assert!((v - (34.0 + 18.0 * SQRT_2)).abs() < 1e-10);
        assert_eq!(eta_subspace(0.0, 2, SubspaceKind::QuantumOperations).unwrap(), f64::INFINITY);
        assert!(eta_subspace(0.5, 2, SubspaceKind::Channels).is_err());
        assert_eq!(optimal_eta_bound(SubspaceKind::QuantumOperations, 3), 801.0);
        assert_eq!(special_case_eta(SubspaceKind::States, 3).unwrap(), 33.0);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in SubspaceKind::ALL {
            assert_eq!(k.name().parse::<SubspaceKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("bogus".parse::<SubspaceKind>().is_err());
    }

    #[test]
    fn unital_seed_is_maximally_entangled() {
        let s = optimal_seed(SubspaceKind::UnitalChannels, 2, &ground_state(2)).unwrap();
        assert!((&s.psi - &Operator::identity(2).scale_real(1.0 / SQRT_2)).max_abs() < 1e-14);
        assert!((s.purity() - 0.5).abs() < 1e-14);
        let c = s.coefficients().unwrap();
        assert!(c.a.abs() < 1e-14 && c.b.abs() < 1e-14);
        assert!((c.c - 1.0 / 3.0).abs() < 1e-14);
    }
}
