use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{basis_observables, DualChoice, ExperimentConfig, Model, Prepared, TrialOutcome};
use crate::devices::{conditional_dual, joint_probabilities, povm_tomography, ConditionalEstimator, FaithfulState};
use crate::error::{Error, Result};
use crate::frames::Povm;
use crate::operator::{Operator, C64};
use crate::processing::{DualKind, MaxLikOptions, Shots};

struct PovmSetup {
    target: Povm,
    faithful: FaithfulState,
    analysis: Povm,
    estimator: ConditionalEstimator,
    observables: Vec<Operator>,
    shots: Shots,
}

pub(super) fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let d = cfg.d;
    let target = match cfg.model() {
        Model::Povm { povm } => povm,
        Model::RandomPovm { outcomes, seed } => Povm::random_ic(d, outcomes, &mut ChaCha8Rng::seed_from_u64(seed))?,
        other => return Err(Error::Config(format!("model {other:?} is not a POVM"))),
    };
    if target.dim() != d {
        return Err(Error::Config(format!("target POVM on {} in a d = {d} experiment", target.dim())));
    }
    let faithful = FaithfulState::maximally_entangled(d);
    let analysis = cfg.measurement.povm.build(d)?;
    let (estimator, linear_kind) = match cfg.measurement.dual {
        DualChoice::Canonical => (ConditionalEstimator::Averaging(DualKind::Canonical), DualKind::Canonical),
        DualChoice::Optimal => (ConditionalEstimator::Averaging(DualKind::Optimal), DualKind::Optimal),
        DualChoice::MaxLik => (ConditionalEstimator::MaxLikelihood(MaxLikOptions::default()), DualKind::Optimal),
    };

    let (basis, basis_labels) = match &cfg.measurement.observables {
        Some(obs) => (obs.clone(), (0..obs.len()).map(|n| format!("X{n}")).collect::<Vec<_>>()),
        None => basis_observables(d),
    };
    let labels = (0..target.len())
        .flat_map(|i| basis_labels.iter().map(move |l| format!("P{i}:{l}")))
        .collect();

    let analytic = match cfg.shots {
        Shots::Exact => vec![0.0; target.len() * basis.len()],
        Shots::Finite(n) => linear_variances(&target, &faithful, &analysis, linear_kind, &basis)?
            .into_iter()
            .map(|v| v / n as f64)
            .collect(),
    };
    let setup = Arc::new(PovmSetup { target, faithful, analysis, estimator, observables: basis, shots: cfg.shots });
    Ok(Prepared {
        labels,
        analytic,
        eta: None,
        outcome_map: None,
        runner: Box::new(move |rng: &mut ChaCha8Rng| run_trial(&setup, rng)),
    })
}

/// Single-shot variance of `Tr[X_n P̂_i] = Σ_k ν_ik c_kn` with
/// `c_kn = Tr[X_n 𝒯⁻¹(Q_k†)]` under the joint multinomial.
fn linear_variances(
    target: &Povm,
    faithful: &FaithfulState,
    analysis: &Povm,
    kind: DualKind,
    observables: &[Operator],
) -> Result<Vec<f64>> {
    let dual = conditional_dual(analysis, faithful, kind)?;
    let joint = joint_probabilities(target, faithful, analysis)?;
    let pulled = dual
        .elements()
        .iter()
        .map(|q| faithful.invert(&q.adjoint()))
        .collect::<Result<Vec<_>>>()?;
    let c: Vec<Vec<C64>> = observables.iter().map(|x| pulled.iter().map(|q| x.expectation(q)).collect()).collect();
    let k = analysis.len();
    let mut out = Vec::with_capacity(target.len() * observables.len());
    for i in 0..target.len() {
        let row = &joint[i * k..(i + 1) * k];
        for cn in &c {
            let second: f64 = cn.iter().zip(row).map(|(c, p)| c.norm_sqr() * p).sum();
            let first: C64 = cn.iter().zip(row).map(|(c, p)| c * *p).sum();
            out.push(second - first.norm_sqr());
        }
    }
    Ok(out)
}

fn run_trial(s: &PovmSetup, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    let est = povm_tomography(&s.target, &s.faithful, &s.analysis, s.estimator, s.shots, rng)?;
    let mut estimates = Vec::with_capacity(s.target.len() * s.observables.len());
    let mut truths = Vec::with_capacity(estimates.capacity());
    for (p_hat, p) in est.elements.iter().zip(s.target.elements()) {
        for x in &s.observables {
            estimates.push(x.expectation(p_hat));
            truths.push(x.expectation(p));
        }
    }
    Ok(TrialOutcome { estimates, truths, trace_distance: None })
}
