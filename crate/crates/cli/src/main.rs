use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qtomo::combs::QuantumComb;
use qtomo::frames::Povm;
use qtomo::harness::{compare_duals, run_experiment, save_record, DualChoice, ExperimentConfig, ExperimentRecord, PovmSpec, Task};
use qtomo::optimal_tester::{table_row, write_table_csv, SubspaceKind, TableRow};
use qtomo::processing::Shots;
use serde::Serialize;

/// Tomography simulations, dual frames and optimal testers.
#[derive(Parser, Debug)]
#[command(name = "qtomo", version)]
struct Cli {
    /// Print JSON to stdout instead of a table.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo state tomography.
    StateTomo(ExperimentArgs),
    /// Monte Carlo process tomography with the covariant Bell scheme.
    ProcessTomo(ExperimentArgs),
    /// Monte Carlo POVM tomography through a faithful state.
    PovmTomo(ExperimentArgs),
    /// Compares the error of several duals on the same state experiment.
    Duals {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Duals to compare (repeatable); defaults to canonical and optimal.
        #[arg(long = "compare", value_name = "DUAL")]
        compare: Vec<DualChoice>,
    },
    /// Table of optimal covariant testers.
    OptimalTester {
        /// Subspace to reconstruct; all kinds when omitted.
        #[arg(long)]
        kind: Option<SubspaceKind>,
        /// Dimension; repeat for several.
        #[arg(long = "d", default_value = "2")]
        d: Vec<usize>,
        /// Also write the table as CSV.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Checks a comb or POVM stored as JSON.
    Validate {
        #[arg(long, value_name = "FILE", required_unless_present = "povm", conflicts_with = "povm")]
        comb: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        povm: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    kind: Option<SubspaceKind>,
    /// pauli6, standard, mub, computational, covariant or file:PATH.
    #[arg(long)]
    povm: Option<PovmSpec>,
    #[arg(long)]
    dual: Option<DualChoice>,
    /// Shots per trial, or "exact".
    #[arg(long)]
    shots: Option<Shots>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Depolarizing noise on the measurement.
    #[arg(long)]
    noise: Option<f64>,
    /// Record path; a CSV of per-trial estimates is written next to it.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Errors that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

impl ExperimentArgs {
    fn config(&self, task: Task) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let cfg = ExperimentConfig::from_reader(BufReader::new(file))
                    .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
                if cfg.task != task {
                    return Err(UsageError(format!("{} configures a {:?} experiment", path.display(), cfg.task)).into());
                }
                cfg
            }
            None => ExperimentConfig::new(task, 2),
        };
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(kind) = self.kind {
            cfg.measurement.kind = kind;
        }
        if let Some(povm) = &self.povm {
            cfg.measurement.povm = povm.clone();
        }
        if let Some(dual) = self.dual {
            cfg.measurement.dual = dual;
        }
        if let Some(shots) = self.shots {
            cfg.shots = shots;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.noise.is_some() {
            cfg.measurement.noise = self.noise;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Returns whether the command's checks passed.
fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::StateTomo(args) => experiment(&args, Task::State, cli.json, &mut stdout),
        Command::ProcessTomo(args) => experiment(&args, Task::Process, cli.json, &mut stdout),
        Command::PovmTomo(args) => experiment(&args, Task::Povm, cli.json, &mut stdout),
        Command::Duals { exp, compare } => {
            let cfg = exp.config(Task::State)?;
            let duals = if compare.is_empty() { vec![DualChoice::Canonical, DualChoice::Optimal] } else { compare };
            let rows = compare_duals(&cfg, &duals)?;
            if cli.json {
                emit_json(&rows, &mut stdout)?;
            } else {
                writeln!(stdout, "{:<10} {:<12} {:>12} {:>12} {:>8}", "dual", "observable", "empirical", "analytic", "bias_z")?;
                for r in &rows {
                    writeln!(
                        stdout,
                        "{:<10} {:<12} {:>12.4e} {:>12.4e} {:>8.2}",
                        r.dual.to_string(),
                        r.observable,
                        r.empirical,
                        r.analytic,
                        r.bias_z
                    )?;
                }
            }
            Ok(true)
        }
        Command::OptimalTester { kind, d, out } => {
            let kinds = kind.map_or_else(|| SubspaceKind::ALL.to_vec(), |k| vec![k]);
            let rows = d
                .iter()
                .flat_map(|&d| kinds.iter().map(move |&k| (k, d)))
                .map(|(k, d)| table_row(k, d))
                .collect::<qtomo::Result<Vec<TableRow>>>()?;
            if let Some(path) = out {
                write_table_csv(&rows, File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
            }
            if cli.json {
                emit_json(&rows, &mut stdout)?;
            } else {
                write_table_csv(&rows, &mut stdout)?;
            }
            Ok(true)
        }
        Command::Validate { comb, povm, tol } => {
            if let Some(path) = comb {
                let comb: QuantumComb = read_json(&path)?;
                let diag = comb.validate(tol)?;
                if cli.json {
                    emit_json(&diag, &mut stdout)?;
                } else {
                    writeln!(stdout, "{}", if diag.passed { "pass" } else { "fail" })?;
                    writeln!(stdout, "min_eigenvalue {:.3e}", diag.min_eigenvalue)?;
                    for (i, r) in diag.residuals.iter().enumerate() {
                        writeln!(stdout, "residual[{}] {r:.3e}", comb.teeth() - i)?;
                    }
                }
                Ok(diag.passed)
            } else {
                let path = povm.expect("clap requires --comb or --povm");
                let povm: Povm = read_json(&path)?;
                let diag = povm.validate(tol);
                if cli.json {
                    emit_json(&diag, &mut stdout)?;
                } else {
                    writeln!(stdout, "{diag:#?}")?;
                }
                Ok(diag.passed)
            }
        }
    }
}

fn experiment(args: &ExperimentArgs, task: Task, json: bool, out: &mut impl Write) -> anyhow::Result<bool> {
    let cfg = args.config(task)?;
    let record = run_experiment(&cfg)?;
    if let Some(path) = &cfg.output {
        save_record(&record, path).with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        emit_json(&record, out)?;
    } else {
        print_summary(&record, out)?;
    }
    Ok(true)
}

fn print_summary(rec: &ExperimentRecord, out: &mut impl Write) -> io::Result<()> {
    let s = &rec.summary;
    writeln!(out, "{:<14} {:>12} {:>12} {:>8}", "observable", "mse", "analytic", "bias_z")?;
    for o in &s.observables {
        writeln!(out, "{:<14} {:>12.4e} {:>12.4e} {:>8.2}", o.label, o.mean_sq_error, o.analytic, o.bias_z())?;
    }
    writeln!(out, "mean_sq_error {:.6e} ± {:.2e}", s.mean_sq_error, s.sq_error_std_err)?;
    writeln!(out, "analytic {:.6e}", s.analytic)?;
    writeln!(out, "ratio {:.4}", s.ratio)?;
    if let Some(eta) = s.eta {
        writeln!(out, "eta {eta:.6}")?;
    }
    if let Some(td) = s.mean_trace_distance {
        writeln!(out, "mean_trace_distance {td:.4e}")?;
    }
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, out: &mut impl Write) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}
