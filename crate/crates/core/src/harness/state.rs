use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{basis_observables, normalized, DualChoice, ExperimentConfig, Model, Prepared, TrialOutcome};
use crate::devices::ChoiOperator;
use crate::error::Result;
use crate::frames::{canonical_dual, DualFrame, Povm};
use crate::operator::{Operator, C64};
use crate::processing::{
    max_likelihood, noisy_povm, observe, optimal_dual, unbias_noise, Ensemble, MaxLikOptions, Picture, Shots,
};

struct StateSetup {
    /// The POVM realized on the state, noise included.
    measured: Povm,
    dual: DualFrame,
    ensemble: Ensemble,
    observables: Vec<Operator>,
    coefficients: Vec<Vec<C64>>,
    maxlik: bool,
    shots: Shots,
}

pub(super) fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let d = cfg.d;
    let ideal = cfg.measurement.povm.build(d)?;
    let ensemble = match cfg.model() {
        Model::State { state } => Ensemble::single(state)?,
        _ => Ensemble::uniform_pure(d),
    };
    let base = match cfg.measurement.dual {
        DualChoice::Canonical => canonical_dual(&ideal)?,
        DualChoice::Optimal | DualChoice::MaxLik => optimal_dual(&ideal, &ensemble)?,
    };
    let (measured, dual) = match cfg.measurement.noise {
        Some(p) if p > 0.0 => {
            let channel = ChoiOperator::depolarizing(p, d, Picture::Schrodinger)?;
            (noisy_povm(&ideal, &channel, Picture::Schrodinger)?, unbias_noise(&base, &channel, Picture::Schrodinger)?)
        }
        _ => (ideal, base),
    };

    let (observables, labels) = match &cfg.measurement.observables {
        Some(obs) => (obs.clone(), (0..obs.len()).map(|n| format!("X{n}")).collect()),
        None => basis_observables(d),
    };
    let coefficients = observables.iter().map(|x| dual.coefficients(x)).collect::<Result<Vec<_>>>()?;

    let analytic = match cfg.shots {
        Shots::Exact => vec![0.0; observables.len()],
        Shots::Finite(n) => {
            let p_avg = normalized(measured.probabilities(&ensemble.average())?)?;
            observables
                .iter()
                .zip(&coefficients)
                .map(|(x, f)| {
                    let first: f64 = f.iter().zip(&p_avg).map(|(f, p)| f.norm_sqr() * p).sum();
                    (first - ensemble.second_moment(x)) / n as f64
                })
                .collect()
        }
    };

    let setup = Arc::new(StateSetup {
        measured,
        dual,
        ensemble,
        observables,
        coefficients,
        maxlik: cfg.measurement.dual == DualChoice::MaxLik,
        shots: cfg.shots,
    });
    Ok(Prepared {
        labels,
        analytic,
        eta: None,
        outcome_map: None,
        runner: Box::new(move |rng: &mut ChaCha8Rng| run_trial(&setup, rng)),
    })
}

fn run_trial(s: &StateSetup, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    let rho = s.ensemble.sample(rng);
    let p = normalized(s.measured.probabilities(&rho)?)?;
    let (freqs, counts) = observe(&p, s.shots, rng)?;
    let truths: Vec<C64> = s.observables.iter().map(|x| x.expectation(&rho)).collect();

    let (estimates, rho_hat) = if s.maxlik {
        let counts = counts.expect("maximum likelihood runs with finite shots");
        let d = rho.dim();
        let init = Operator::identity(d).scale_real(1.0 / d as f64);
        // An unconverged fit is still a valid state; keep it.
        let est = max_likelihood(&s.measured, &counts, &init, MaxLikOptions::default())?.state;
        (s.observables.iter().map(|x| x.expectation(&est)).collect(), est)
    } else {
        let est = s
            .coefficients
            .iter()
            .map(|f| f.iter().zip(&freqs).map(|(f, &v)| f * v).sum())
            .collect();
        (est, s.dual.reconstruct(&freqs)?)
    };
    let trace_distance = 0.5 * (&rho_hat - &rho).trace_norm();
    Ok(TrialOutcome { estimates, truths, trace_distance: Some(trace_distance) })
}
