//! Monte Carlo simulation of tomography experiments, compared against the
//! analytic error predictions.
//!
//! Every trial draws from its own ChaCha stream (`seed`, stream = trial
//! index), so records are reproducible regardless of thread scheduling.

mod povm;
mod process;
mod state;

pub use process::{bell_scheme_elements, ProcessScheme};

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combs::{tester_probabilities, Tester};
use crate::devices::ChoiOperator;
use crate::error::{Error, Result};
use crate::frames::Povm;
use crate::operator::design::{DesignSpec, UnitaryDesign};
use crate::operator::{pauli, Operator, C64};
use crate::optimal_tester::SubspaceKind;
use crate::processing::{sample_multinomial, Counts, Shots};

/// Schema version written into every record.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    State,
    Process,
    Povm,
}

/// What is being measured. Each task has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    /// A fresh uniformly random pure state per trial.
    UniformPure,
    State { state: Operator },
    /// `D_p`; `p = 1` is the completely depolarizing channel.
    Depolarizing { p: f64 },
    Channel { choi: ChoiOperator },
    Povm { povm: Povm },
    /// A random IC POVM drawn once from `seed`.
    RandomPovm { outcomes: usize, seed: u64 },
}

/// Built-in or file-based POVM choice, written as `pauli6`, `standard`,
/// `mub`, `computational`, `covariant` or `file:PATH`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PovmSpec {
    Pauli6,
    Standard,
    Mub,
    Computational,
    /// Clifford orbit of a fixed non-stabilizer pure state.
    Covariant,
    File(PathBuf),
}

impl PovmSpec {
    pub fn build(&self, d: usize) -> Result<Povm> {
        match self {
            Self::Pauli6 if d == 2 => Ok(Povm::pauli6()),
            Self::Pauli6 => Err(Error::Config(format!("pauli6 is a qubit POVM, requested d = {d}"))),
            Self::Standard => Povm::standard(d),
            Self::Mub => Povm::mub(d),
            Self::Computational => Ok(Povm::computational(d)),
            Self::Covariant => {
                let fid = covariant_fiducial(d);
                Povm::covariant_design(&Operator::projector(&fid), &UnitaryDesign::clifford(d)?)
            }
            Self::File(path) => {
                let povm: Povm = serde_json::from_reader(std::fs::File::open(path)?)?;
                if povm.dim() != d {
                    return Err(Error::Config(format!("{} holds a POVM on {}, expected {d}", path.display(), povm.dim())));
                }
                Ok(povm)
            }
        }
    }
}

/// Normalized `Σ_k (k+1) e^{ik} |k⟩`, off every stabilizer state.
fn covariant_fiducial(d: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|k| C64::from_polar(k as f64 + 1.0, k as f64 * 0.7 + 0.3)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

impl fmt::Display for PovmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pauli6 => f.write_str("pauli6"),
            Self::Standard => f.write_str("standard"),
            Self::Mub => f.write_str("mub"),
            Self::Computational => f.write_str("computational"),
            Self::Covariant => f.write_str("covariant"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for PovmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pauli6" => Ok(Self::Pauli6),
            "standard" => Ok(Self::Standard),
            "mub" => Ok(Self::Mub),
            "computational" => Ok(Self::Computational),
            "covariant" => Ok(Self::Covariant),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "unknown POVM {s:?}; expected pauli6, standard, mub, computational, covariant or file:PATH"
                ))),
            },
        }
    }
}

impl TryFrom<String> for PovmSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PovmSpec> for String {
    fn from(p: PovmSpec) -> String {
        p.to_string()
    }
}

/// Post-processing of the outcome statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualChoice {
    Canonical,
    #[default]
    Optimal,
    /// Maximum likelihood (state and POVM tasks).
    #[serde(rename = "maxlik")]
    MaxLik,
}

impl fmt::Display for DualChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Canonical => "canonical",
            Self::Optimal => "optimal",
            Self::MaxLik => "maxlik",
        })
    }
}

impl FromStr for DualChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "optimal" => Ok(Self::Optimal),
            "maxlik" => Ok(Self::MaxLik),
            _ => Err(Error::Config(format!("unknown dual {s:?}; expected canonical, optimal or maxlik"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSpec {
    /// Measured POVM (state task) or analysis POVM on the reference (POVM task).
    pub povm: PovmSpec,
    pub dual: DualChoice,
    /// Transformations targeted by the process-task tester.
    pub kind: SubspaceKind,
    /// Unitary average realizing the covariant tester.
    pub design: DesignSpec,
    /// Depolarizing noise acting before the measurement (state task); the
    /// estimator is unbiased for it.
    pub noise: Option<f64>,
    /// Observables to estimate; an orthonormal Hermitian basis by default.
    pub observables: Option<Vec<Operator>>,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        Self {
            povm: PovmSpec::Standard,
            dual: DualChoice::Optimal,
            kind: SubspaceKind::UnitalChannels,
            design: DesignSpec::Clifford,
            noise: None,
            observables: None,
        }
    }
}

fn default_shots() -> Shots {
    Shots::Finite(10_000)
}

fn default_trials() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub d: usize,
    #[serde(default = "default_shots")]
    pub shots: Shots,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    #[serde(default)]
    pub measurement: MeasurementSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(task: Task, d: usize) -> Self {
        Self {
            task,
            d,
            shots: default_shots(),
            trials: default_trials(),
            seed: 0,
            model: None,
            measurement: MeasurementSpec::default(),
            output: None,
        }
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!("d must be at least 2, got {}", self.d)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.measurement.dual == DualChoice::MaxLik && self.shots == Shots::Exact {
            return Err(Error::Config("maximum likelihood needs a finite shot count".into()));
        }
        let model_ok = matches!(
            (self.task, self.model()),
            (Task::State, Model::UniformPure | Model::State { .. })
                | (Task::Process, Model::Depolarizing { .. } | Model::Channel { .. })
                | (Task::Povm, Model::Povm { .. } | Model::RandomPovm { .. })
        );
        if !model_ok {
            return Err(Error::Config(format!("model {:?} does not fit the {:?} task", self.model(), self.task)));
        }
        if let Some(p) = self.measurement.noise {
            if self.task != Task::State || !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("noise {p} is supported for the state task with p in [0, 1)")));
            }
        }
        if self.task == Task::Process && self.measurement.dual == DualChoice::MaxLik {
            return Err(Error::Config("the process task supports the canonical and optimal duals".into()));
        }
        Ok(())
    }

    /// The configured model or the task default.
    pub fn model(&self) -> Model {
        self.model.clone().unwrap_or(match self.task {
            Task::State => Model::UniformPure,
            Task::Process => Model::Depolarizing { p: 1.0 },
            Task::Povm => Model::RandomPovm { outcomes: self.d * self.d, seed: self.seed },
        })
    }
}

/// Per-trial outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub estimates: Vec<C64>,
    pub truths: Vec<C64>,
    /// `Σ_n |estimate_n − truth_n|²`.
    pub sq_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub label: String,
    pub mean_sq_error: f64,
    /// Predicted mean squared error, `δ(X)/N`.
    pub analytic: f64,
    /// Mean of `estimate − truth` over trials.
    pub bias: C64,
    /// Standard error of that mean.
    pub bias_std_err: f64,
}

impl ObservableSummary {
    /// `|bias| / standard error`; biases at round-off level count as zero.
    pub fn bias_z(&self) -> f64 {
        if self.bias.norm() <= 1e-12 {
            0.0
        } else if self.bias_std_err > 0.0 {
            self.bias.norm() / self.bias_std_err
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean over trials of the summed squared error.
    pub mean_sq_error: f64,
    pub sq_error_std_err: f64,
    /// Predicted mean summed squared error.
    pub analytic: f64,
    /// `mean_sq_error / analytic`.
    pub ratio: f64,
    /// `Tr[Ỹ‡ G]` for the process task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_trace_distance: Option<f64>,
    pub observables: Vec<ObservableSummary>,
}

/// Flattening of the process-task outcomes `(g, h, j, k)` into one index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMap {
    pub design_size: Option<usize>,
    pub bell_outcomes: usize,
    pub layout: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub observables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_map: Option<OutcomeMap>,
    pub summary: Summary,
    #[serde(default)]
    pub trials: Vec<TrialResult>,
    pub wall_clock_seconds: f64,
}

impl ExperimentRecord {
    /// The record with the wall-clock field cleared, for comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_clock_seconds: 0.0, ..self.clone() }
    }
}

pub(crate) type TrialRunner = Box<dyn Fn(&mut ChaCha8Rng) -> Result<TrialOutcome> + Sync + Send>;

/// Observable labels, analytic predictions and the per-trial simulation.
pub(crate) struct Prepared {
    pub labels: Vec<String>,
    pub analytic: Vec<f64>,
    pub eta: Option<f64>,
    pub outcome_map: Option<OutcomeMap>,
    pub runner: TrialRunner,
}

pub(crate) struct TrialOutcome {
    pub estimates: Vec<C64>,
    pub truths: Vec<C64>,
    pub trace_distance: Option<f64>,
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn mean_and_std_err(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mut s = NeumaierSum::default();
    xs.clone().for_each(|x| s.add(x));
    let mean = s.value() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let mut v = NeumaierSum::default();
    xs.for_each(|x| v.add((x - mean).powi(2)));
    (mean, (v.value() / (n - 1.0) / n).sqrt())
}

/// Runs all trials of an experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let prepared = match cfg.task {
        Task::State => state::prepare(cfg)?,
        Task::Process => process::prepare(cfg)?,
        Task::Povm => povm::prepare(cfg)?,
    };
    let trials: Vec<TrialResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let out = (prepared.runner)(&mut rng)?;
            let mut sq = NeumaierSum::default();
            for (e, x) in out.estimates.iter().zip(&out.truths) {
                sq.add((e - x).norm_sqr());
            }
            Ok(TrialResult {
                trial: t,
                estimates: out.estimates,
                truths: out.truths,
                sq_error: sq.value(),
                trace_distance: out.trace_distance,
            })
        })
        .collect::<Result<_>>()?;

    let summary = summarize(&prepared, &trials);
    Ok(ExperimentRecord {
        schema: SCHEMA_VERSION,
        config: cfg.clone(),
        observables: prepared.labels.clone(),
        outcome_map: prepared.outcome_map.clone(),
        summary,
        trials,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn summarize(prepared: &Prepared, trials: &[TrialResult]) -> Summary {
    let (mean_sq_error, sq_error_std_err) = mean_and_std_err(trials.iter().map(|t| t.sq_error));
    let mut total = NeumaierSum::default();
    prepared.analytic.iter().for_each(|&a| total.add(a));
    let analytic = total.value();
    let observables = prepared
        .labels
        .iter()
        .enumerate()
        .map(|(n, label)| {
            let err = |t: &TrialResult| t.estimates[n] - t.truths[n];
            let (mse, _) = mean_and_std_err(trials.iter().map(|t| err(t).norm_sqr()));
            let (re, re_se) = mean_and_std_err(trials.iter().map(|t| err(t).re));
            let (im, im_se) = mean_and_std_err(trials.iter().map(|t| err(t).im));
            ObservableSummary {
                label: label.clone(),
                mean_sq_error: mse,
                analytic: prepared.analytic[n],
                bias: C64::new(re, im),
                bias_std_err: re_se.hypot(im_se),
            }
        })
        .collect();
    let mean_trace_distance = trials
        .iter()
        .map(|t| t.trace_distance)
        .collect::<Option<Vec<f64>>>()
        .map(|v| mean_and_std_err(v.into_iter()).0);
    Summary {
        mean_sq_error,
        sq_error_std_err,
        analytic,
        ratio: if analytic > 0.0 { mean_sq_error / analytic } else { f64::NAN },
        eta: prepared.eta,
        mean_trace_distance,
        observables,
    }
}

/// Multinomial sample of `n` outcomes of `povm` on `rho`.
pub fn sample_counts<R: Rng + ?Sized>(povm: &Povm, rho: &Operator, n: u64, rng: &mut R) -> Result<Counts> {
    let p = normalized(povm.probabilities(rho)?)?;
    sample_multinomial(&p, n, rng)
}

/// Multinomial sample of `n` outcomes of a tester on a channel.
pub fn sample_tester_counts<R: Rng + ?Sized>(t: &Tester, r: &ChoiOperator, n: u64, rng: &mut R) -> Result<Counts> {
    let p = normalized(tester_probabilities(t, r)?)?;
    sample_multinomial(&p, n, rng)
}

/// Clips round-off negatives and renormalizes a probability vector.
pub(crate) fn normalized(mut p: Vec<f64>) -> Result<Vec<f64>> {
    for v in &mut p {
        if *v < -1e-9 {
            return Err(Error::InvalidState(format!("negative probability {v}")));
        }
        *v = v.max(0.0);
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("probabilities sum to {s}")));
    }
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

/// Orthonormal Hermitian basis with labels `B0, B1, …` (`B0 = I/√d`).
pub(crate) fn basis_observables(d: usize) -> (Vec<Operator>, Vec<String>) {
    let basis = pauli::orthonormal_hermitian_basis(d);
    let labels = (0..basis.len()).map(|n| format!("B{n}")).collect();
    (basis, labels)
}

/// One row of a dual comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualComparison {
    pub dual: DualChoice,
    pub observable: String,
    pub empirical: f64,
    pub analytic: f64,
    pub bias_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_trace_distance: Option<f64>,
}

/// Runs the same experiment under several post-processings.
pub fn compare_duals(cfg: &ExperimentConfig, duals: &[DualChoice]) -> Result<Vec<DualComparison>> {
    let mut rows = Vec::new();
    for &dual in duals {
        let mut c = cfg.clone();
        c.measurement.dual = dual;
        let rec = run_experiment(&c)?;
        for o in &rec.summary.observables {
            rows.push(DualComparison {
                dual,
                observable: o.label.clone(),
                empirical: o.mean_sq_error,
                analytic: o.analytic,
                bias_z: o.bias_z(),
                mean_trace_distance: rec.summary.mean_trace_distance,
            });
        }
    }
    Ok(rows)
}

pub fn write_record<W: Write>(record: &ExperimentRecord, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, record)?;
    Ok(())
}

pub fn read_record<R: Read>(r: R) -> Result<ExperimentRecord> {
    let rec: ExperimentRecord = serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))?;
    if rec.schema != SCHEMA_VERSION {
        return Err(Error::Format(format!("record schema {} is not supported", rec.schema)));
    }
    if !rec.trials.is_empty() && rec.trials.len() != rec.config.trials {
        return Err(Error::Format(format!("{} trials stored for a {}-trial config", rec.trials.len(), rec.config.trials)));
    }
    Ok(rec)
}

/// CSV sidecar with columns `trial, observable, estimate_re, estimate_im, sq_error`,
/// one row per trial and observable.
pub fn write_trials_csv<W: Write>(record: &ExperimentRecord, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "observable", "estimate_re", "estimate_im", "sq_error"])?;
    for t in &record.trials {
        for (n, (e, x)) in t.estimates.iter().zip(&t.truths).enumerate() {
            out.serialize((t.trial, &record.observables[n], e.re, e.im, (e - x).norm_sqr()))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `path` (JSON) and `path` with extension `csv` (per-trial rows).
pub fn save_record(record: &ExperimentRecord, path: &Path) -> Result<PathBuf> {
    write_record(record, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    let sidecar = path.with_extension("csv");
    write_trials_csv(record, std::io::BufWriter::new(std::fs::File::create(&sidecar)?))?;
    Ok(sidecar)
}

pub fn load_record(path: &Path) -> Result<ExperimentRecord> {
    read_record(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_beats_naive_sum() {
        let mut s = NeumaierSum::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn povm_spec_parsing() {
        assert_eq!("pauli6".parse::<PovmSpec>().unwrap(), PovmSpec::Pauli6);
        assert_eq!("file:a.json".parse::<PovmSpec>().unwrap(), PovmSpec::File("a.json".into()));
        assert!("file:".parse::<PovmSpec>().is_err());
        assert!("sic".parse::<PovmSpec>().is_err());
        let p = PovmSpec::Covariant.build(2).unwrap();
        assert_eq!(p.len(), 24);
        assert!(p.is_info_complete(1e-9));
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"task": "state", "d": 2}"#).unwrap();
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.shots, Shots::Finite(10_000));
        assert_eq!(cfg.model(), Model::UniformPure);
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"task": "state", "d": 2, "bogus": 1}"#).is_err());
        let mut bad = cfg.clone();
        bad.model = Some(Model::Depolarizing { p: 0.5 });
        assert!(bad.validate().is_err());
        bad = cfg;
        bad.trials = 0;
        assert!(bad.validate().is_err());
    }
}
