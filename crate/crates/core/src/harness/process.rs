use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, Model, OutcomeMap, Prepared, TrialOutcome};
use crate::devices::ChoiOperator;
use crate::error::{Error, Result};
use crate::operator::design::{DesignSpec, UnitaryDesign};
use crate::operator::{haar_random_unitary, pauli, tol, vectorize, Operator, SubsystemShape, VecOperator, C64};
use crate::optimal_tester::{ground_state, optimal_seed, SchurCoefficients, SubspaceKind};
use crate::processing::{Picture, Shots};

/// `E_jk = Tr_A[(|Ψ⟩⟩⟨⟨Ψ|_{A₁A₂} ⊗ I)(B_j^{A₁S₁} ⊗ B_k^{A₂S₂})]` on `S₁ ⊗ S₂`,
/// where `B_j = |W_j⟩⟩⟨⟨W_j| / d` runs over the generalized Bell basis
/// built from the Weyl operators. Index `j·d² + k`; `Σ_jk E_jk = I` when
/// `Tr[Ψ†Ψ] = 1`.
pub fn bell_scheme_elements(psi: &Operator, d: usize) -> Result<Vec<Operator>> {
    if psi.rows() != d || psi.cols() != d {
        return Err(Error::Shape(format!("{}x{} seed for dimension {d}", psi.rows(), psi.cols())));
    }
    let bell: Vec<Operator> = (0..d * d)
        .map(|j| {
            let w = vectorize(&pauli::weyl(d, j / d, j % d)).amplitudes;
            Operator::from_matrix(&w * w.adjoint()).scale_real(1.0 / d as f64)
        })
        .collect();
    let v = vectorize(psi).amplitudes;
    let seed = Operator::from_matrix(&v * v.adjoint()).tensor(&Operator::identity(d * d));
    let split = SubsystemShape::new(&[d, d, d, d]);
    let mut out = Vec::with_capacity(d.pow(4));
    for bj in &bell {
        for bk in &bell {
            // (A₁, S₁, A₂, S₂) → (A₁, A₂, S₁, S₂)
            let b = bj.tensor(bk).permute_subsystems(&split, &[0, 2, 1, 3])?;
            out.push((&seed * &b).partial_trace(&split, &[0, 1])?);
        }
    }
    Ok(out)
}

/// How the random local unitaries are drawn.
#[derive(Clone, Debug)]
enum UnitarySource {
    List(UnitaryDesign),
    /// Fresh Haar unitaries for every shot.
    Haar,
}

/// The covariant tester realized shot by shot: draw `(U, V)`, then record
/// the Bell outcomes `(j, k)` with probability `Tr[Π_jk R]`, where
/// `Π_jk = (U⊗V)† E_jk (U⊗V) / d`.
#[derive(Clone, Debug)]
pub struct ProcessScheme {
    pub d: usize,
    pub kind: SubspaceKind,
    pub psi: Operator,
    pub elements: Vec<Operator>,
    element_traces: Vec<f64>,
    pub coefficients: SchurCoefficients,
    source: UnitarySource,
}

impl ProcessScheme {
    /// Uses the optimal seed for `kind` with fiducial `|0⟩`. A Haar spec
    /// with `samples = 0` draws fresh unitaries per shot.
    pub fn new(kind: SubspaceKind, d: usize, design: DesignSpec) -> Result<Self> {
        let seed = optimal_seed(kind, d, &ground_state(d))?;
        let coefficients = seed.coefficients()?;
        let source = match design {
            DesignSpec::Haar { samples: 0, .. } => UnitarySource::Haar,
            spec => {
                let design = UnitaryDesign::build(spec, d)?;
                if !design.exact {
                    log::warn!("{} Haar samples only approximate the twirl; predictions assume it is exact", design.len());
                }
                UnitarySource::List(design)
            }
        };
        let elements = bell_scheme_elements(&seed.psi, d)?;
        let element_traces = elements.iter().map(|e| e.trace().re).collect();
        Ok(Self { d, kind, psi: seed.psi, elements, element_traces, coefficients, source })
    }

    pub fn design_size(&self) -> Option<usize> {
        match &self.source {
            UnitarySource::List(g) => Some(g.len()),
            UnitarySource::Haar => None,
        }
    }

    /// `η = Tr[Ỹ‡ G]` for the configured subspace.
    pub fn eta(&self) -> f64 {
        self.coefficients.eta_for(self.kind)
    }

    fn draw_local<R: Rng + ?Sized>(&self, rng: &mut R) -> Operator {
        match &self.source {
            UnitarySource::List(g) => {
                let u = &g.unitaries[rng.random_range(0..g.len())];
                let v = &g.unitaries[rng.random_range(0..g.len())];
                u.tensor(v)
            }
            UnitarySource::Haar => haar_random_unitary(self.d, rng).tensor(&haar_random_unitary(self.d, rng)),
        }
    }

    /// `p(j, k | U, V)` for `w = U ⊗ V`.
    pub fn conditional_probabilities(&self, w: &Operator, r: &ChoiOperator) -> Vec<f64> {
        let rotated = &(w * r.operator()) * &w.adjoint();
        let d = self.d as f64;
        self.elements.iter().map(|e| (rotated.expectation(e).re / d).max(0.0)).collect()
    }

    /// Weight `f` of outcome `Π` for an observable in a single class with
    /// coefficient `coef`: `d Tr[Π X] / (coef Tr Π)`. Here `rotated_x` is
    /// `w X w†`.
    fn coefficient(&self, jk: usize, rotated_x: &Operator, coef: f64) -> C64 {
        rotated_x.expectation(&self.elements[jk]) * (self.d as f64 / (coef * self.element_traces[jk]))
    }

    /// `d Σ_s Π_s / Tr Π_s` averaged over `n` shots; its overlaps with the
    /// observables give the estimates.
    fn sampled_moment<R: Rng + ?Sized>(&self, r: &ChoiOperator, n: u64, rng: &mut R) -> Result<Operator> {
        let dd = self.d * self.d;
        let mut acc = Operator::zeros(dd, dd);
        for _ in 0..n {
            let w = self.draw_local(rng);
            let p = self.conditional_probabilities(&w, r);
            let jk = draw_index(&p, rng)?;
            let pi = &(&w.adjoint() * &self.elements[jk]) * &w;
            acc += &pi.scale_real(self.d as f64 / self.element_traces[jk]);
        }
        Ok(acc.scale_real(1.0 / n as f64))
    }

    /// The infinite-shot limit `Ỹ|R⟩⟩`.
    fn exact_moment(&self, r: &ChoiOperator) -> Result<Operator> {
        let y = self.coefficients.operator();
        let v = vectorize(r.operator());
        let out = y.matrix() * &v.amplitudes;
        Ok(VecOperator::from_amplitudes(v.dim_out, v.dim_in, out)?.devectorize())
    }
}

fn draw_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("conditional probabilities sum to {total}")));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(p.iter().rposition(|&q| q > 0.0).unwrap_or(p.len() - 1))
}

/// Products `B_a ⊗ B_b` of the orthonormal basis that lie in the subspace,
/// each tagged with its Schur class (0 for `P₁` … 3 for `P₄`).
fn product_observables(kind: SubspaceKind, d: usize) -> Vec<(Operator, String, usize)> {
    let basis = pauli::orthonormal_hermitian_basis(d);
    let weights = kind.projector_weights();
    let mut out = Vec::new();
    for (a, ba) in basis.iter().enumerate() {
        for (b, bb) in basis.iter().enumerate() {
            let class = match (a == 0, b == 0) {
                (true, true) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (false, false) => 3,
            };
            if weights[class] > 0.0 {
                out.push((ba.tensor(bb), format!("B{a}xB{b}"), class));
            }
        }
    }
    out
}

struct ProcessSetup {
    scheme: ProcessScheme,
    channel: ChoiOperator,
    observables: Vec<Operator>,
    coefs: Vec<f64>,
    shots: Shots,
}

pub(super) fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let d = cfg.d;
    let channel = match cfg.model() {
        Model::Depolarizing { p } => ChoiOperator::depolarizing(p, d, Picture::Schrodinger)?,
        Model::Channel { choi } => choi,
        other => return Err(Error::Config(format!("model {other:?} is not a channel"))),
    };
    if channel.d_in() != d || channel.d_out() != d {
        return Err(Error::Config(format!("channel {}→{} in a d = {d} experiment", channel.d_in(), channel.d_out())));
    }
    let kind = cfg.measurement.kind;
    let scheme = ProcessScheme::new(kind, d, cfg.measurement.design)?;
    let sc = scheme.coefficients;
    let class_coef = [1.0, sc.a, sc.b, sc.c];

    let (observables, labels, coefs): (Vec<Operator>, Vec<String>, Vec<f64>) = match &cfg.measurement.observables {
        Some(obs) => {
            let proj = crate::optimal_tester::SchurProjectors::square(d);
            let mut coefs = Vec::with_capacity(obs.len());
            for (n, x) in obs.iter().enumerate() {
                let w = proj.coefficients(x);
                let parts: Vec<usize> = (0..4).filter(|&k| w[k] > 1e-10).collect();
                match parts.as_slice() {
                    [k] => coefs.push(class_coef[*k]),
                    _ => {
                        return Err(Error::Config(format!(
                            "observable {n} must lie in a single component, found weights {w:?}"
                        )))
                    }
                }
            }
            (obs.clone(), (0..obs.len()).map(|n| format!("X{n}")).collect(), coefs)
        }
        None => {
            let prods = product_observables(kind, d);
            let coefs = prods.iter().map(|(_, _, k)| class_coef[*k]).collect();
            let (ops, labels) = prods.into_iter().map(|(x, l, _)| (x, l)).unzip();
            (ops, labels, coefs)
        }
    };
    if let Some(&c) = coefs.iter().find(|&&c| c <= tol::RANK) {
        return Err(Error::NotInformationallyComplete(c));
    }

    let truths: Vec<C64> = observables.iter().map(|x| x.expectation(channel.operator())).collect();
    let analytic = match cfg.shots {
        Shots::Exact => vec![0.0; observables.len()],
        Shots::Finite(n) => single_shot_variances(&scheme, &channel, &observables, &coefs, &truths)?
            .into_iter()
            .map(|v| v / n as f64)
            .collect(),
    };
    let outcome_map = OutcomeMap {
        design_size: scheme.design_size(),
        bell_outcomes: d.pow(4),
        layout: "(g, h, j, k) with Bell pair index j·d² + k".into(),
    };
    let eta = scheme.eta();
    let setup = Arc::new(ProcessSetup { scheme, channel, observables, coefs, shots: cfg.shots });
    Ok(Prepared {
        labels,
        analytic,
        eta: Some(eta),
        outcome_map: Some(outcome_map),
        runner: Box::new(move |rng: &mut ChaCha8Rng| run_trial(&setup, &truths, rng)),
    })
}

/// `E[f_n²] − |t_n|²` per observable. Enumerated over the qubit Clifford
/// group (a unitary 3-design, so it also covers per-shot Haar sampling);
/// otherwise the unitarily invariant value `1/coef − |t|²`, exact for a
/// completely depolarizing channel.
fn single_shot_variances(
    scheme: &ProcessScheme,
    channel: &ChoiOperator,
    observables: &[Operator],
    coefs: &[f64],
    truths: &[C64],
) -> Result<Vec<f64>> {
    let d = scheme.d;
    let enumerable = match &scheme.source {
        UnitarySource::List(g) => g.exact && g.len().pow(2) <= 1024,
        UnitarySource::Haar => d == 2,
    };
    if !enumerable {
        let depolarized = ChoiOperator::depolarizing(1.0, d, Picture::Schrodinger)?;
        if (channel.operator() - depolarized.operator()).max_abs() > 1e-12 {
            log::warn!("analytic prediction assumes a completely depolarizing channel");
        }
        return Ok(coefs.iter().zip(truths).map(|(c, t)| 1.0 / c - t.norm_sqr()).collect());
    }
    let group = match &scheme.source {
        UnitarySource::List(g) => g.clone(),
        UnitarySource::Haar => UnitaryDesign::clifford(2)?,
    };
    let weight = 1.0 / group.len().pow(2) as f64;
    let mut second = vec![0.0; observables.len()];
    for u in &group.unitaries {
        for v in &group.unitaries {
            let w = u.tensor(v);
            let p = scheme.conditional_probabilities(&w, channel);
            let rotated: Vec<Operator> = observables.iter().map(|x| &(&w * x) * &w.adjoint()).collect();
            for (jk, &pj) in p.iter().enumerate() {
                if pj == 0.0 {
                    continue;
                }
                for (n, rx) in rotated.iter().enumerate() {
                    second[n] += weight * pj * scheme.coefficient(jk, rx, coefs[n]).norm_sqr();
                }
            }
        }
    }
    Ok(second.iter().zip(truths).map(|(s, t)| s - t.norm_sqr()).collect())
}

fn run_trial(s: &ProcessSetup, truths: &[C64], rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    let moment = match s.shots {
        Shots::Exact => s.scheme.exact_moment(&s.channel)?,
        Shots::Finite(n) => s.scheme.sampled_moment(&s.channel, n, rng)?,
    };
    let estimates = s.observables.iter().zip(&s.coefs).map(|(x, c)| x.expectation(&moment) / *c).collect();
    Ok(TrialOutcome { estimates, truths: truths.to_vec(), trace_distance: None })
}
