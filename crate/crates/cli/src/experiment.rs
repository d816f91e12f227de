//! `run`: Monte Carlo coverage over an `(n, δ)` grid.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use randesign::coverage::{self, CoverageSummary, Estimator, TrialOutcome};
use randesign::diagnostics::Relation;
use randesign::{BoundReport, Error, PopulationModel};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::GlobalOpts;

pub const SCHEMA: &str = "randesign/1";

/// Header of `trials.csv`.
pub const TRIAL_COLUMNS: [&str; 11] = [
    "trial",
    "n",
    "delta",
    "excess_loss",
    "bound_total",
    "bound_matrix",
    "bound_noise",
    "bound_approx",
    "violation",
    "slack_decomp",
    "wall_ms",
];

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub n: usize,
    pub delta: f64,
    pub excess_loss: f64,
    pub bound_total: f64,
    pub bound_matrix: f64,
    pub bound_noise: f64,
    pub bound_approx: f64,
    pub violation: u8,
    pub slack_decomp: f64,
    pub wall_ms: Option<f64>,
}

/// Noise and approximation columns of a bound. For ridge the third term is
/// the noise part and the first two terms the approximation part.
pub fn bound_columns(b: &BoundReport) -> (f64, f64) {
    match b.theorem {
        "ridge" => (
            b.third.unwrap_or(0.0),
            b.first.unwrap_or(0.0) + b.second.unwrap_or(0.0),
        ),
        _ => (b.noise.unwrap_or(0.0), b.approx.unwrap_or(0.0)),
    }
}

impl TrialRecord {
    pub fn new(o: &TrialOutcome, bound: &BoundReport) -> Self {
        let (noise, approx) = bound_columns(bound);
        TrialRecord {
            trial: o.trial,
            n: o.n,
            delta: o.delta,
            excess_loss: o.excess_loss,
            bound_total: o.bound_total,
            bound_matrix: bound.matrix_error,
            bound_noise: noise,
            bound_approx: approx,
            violation: u8::from(o.violation),
            slack_decomp: o.slack_decomp,
            wall_ms: o.wall_ms,
        }
    }
}

/// One row of `checks.csv`: a decomposition check on one trial.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub trial: u64,
    pub n: usize,
    pub delta: f64,
    pub check: &'static str,
    pub relation: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    #[serde(flatten)]
    pub coverage: CoverageSummary,
    /// Fixed-design mean `dσ²/n`.
    pub fixed_design_reference: f64,
    pub matrix_error_max: f64,
    pub bound: BoundReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub n: usize,
    pub delta: f64,
    pub reason: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: &'static str,
    pub master_seed: u64,
    pub estimator: Estimator,
    pub trials: u64,
    pub cells: Vec<Cell>,
    pub skipped: Vec<Skipped>,
}

/// Output files of a run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub trials_csv: PathBuf,
    pub checks_csv: PathBuf,
    pub summary_json: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        RunPaths {
            trials_csv: dir.join("trials.csv"),
            checks_csv: dir.join("checks.csv"),
            summary_json: dir.join("summary.json"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_matrices: bool,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Runs every applicable `(n, δ)` cell and writes `trials.csv`,
/// `checks.csv` and `summary.json` under the output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    model: &PopulationModel,
    opts: &GlobalOpts,
    run: &RunOptions,
) -> Result<(Summary, RunPaths)> {
    let seed = opts.seed.unwrap_or(cfg.master_seed);
    let trials = opts.trials.unwrap_or(cfg.trials);
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    let out = opts.out.clone().unwrap_or_else(|| cfg.outputs.clone());
    let paths = RunPaths::new(&out);

    let mut bounds = Vec::new();
    let mut skipped = Vec::new();
    for &n in &cfg.n_grid {
        for &delta in &cfg.delta_grid {
            match coverage::bound_for(model, cfg.estimator, cfg.condition, n, delta) {
                Ok(b) => bounds.push(b),
                Err(Error::Inapplicable { bound, reason, threshold }) => {
                    warn!("skipping n={n}, delta={delta}: {bound} bound inapplicable ({reason})");
                    skipped.push(Skipped {
                        n,
                        delta,
                        reason: format!("{bound}: {reason}"),
                        threshold,
                    });
                }
                Err(e) => return Err(e).with_context(|| format!("bound at n={n}, delta={delta}")),
            }
        }
    }
    if bounds.is_empty() {
        let list: Vec<String> = skipped
            .iter()
            .map(|s| format!("n={} delta={}: {} (threshold {})", s.n, s.delta, s.reason, s.threshold))
            .collect();
        bail!("no applicable (n, delta) pair in the config:\n  {}", list.join("\n  "));
    }

    let mut trials_w = csv_writer(&paths.trials_csv)?;
    let mut checks_w = csv_writer(&paths.checks_csv)?;
    let sigma2 = model.noise().variance();
    let d = model.dim() as f64;
    let mut cells = Vec::new();
    for bound in &bounds {
        info!("n={} delta={}: {} trials", bound.n, bound.delta, trials);
        let outcomes = coverage::run_trials(model, cfg.estimator, bound, seed, trials, cfg.record_wall_time)
            .with_context(|| format!("trials at n={}, delta={}", bound.n, bound.delta))?;
        for o in &outcomes {
            trials_w.serialize(TrialRecord::new(o, bound))?;
            for c in &o.checks.checks {
                checks_w.serialize(CheckRecord {
                    trial: o.trial,
                    n: o.n,
                    delta: o.delta,
                    check: c.name,
                    relation: match c.relation {
                        Relation::Equality => "eq",
                        Relation::AtMost => "le",
                    },
                    lhs: c.lhs,
                    rhs: c.rhs,
                    slack: c.slack,
                    pass: u8::from(c.pass),
                })?;
            }
        }
        cells.push(Cell {
            coverage: coverage::summarize(&outcomes, bound),
            fixed_design_reference: d * sigma2 / bound.n as f64,
            matrix_error_max: outcomes.iter().map(|o| o.matrix_error).fold(0.0, f64::max),
            bound: bound.clone(),
        });
    }
    trials_w.flush().with_context(|| format!("writing {}", paths.trials_csv.display()))?;
    checks_w.flush().with_context(|| format!("writing {}", paths.checks_csv.display()))?;

    if run.dump_matrices {
        dump_matrices(model, &bounds, seed, &out.join("matrices"))?;
    }

    let summary = Summary {
        schema: SCHEMA,
        master_seed: seed,
        estimator: cfg.estimator,
        trials,
        cells,
        skipped,
    };
    crate::write_text(&paths.summary_json, &serde_json::to_string_pretty(&summary)?)?;
    Ok((summary, paths))
}

/// `Σ` and, for each sample size, `Σ̂` of trial 0.
fn dump_matrices(model: &PopulationModel, bounds: &[BoundReport], seed: u64, dir: &Path) -> Result<()> {
    crate::write_text(&dir.join("sigma.csv"), &model.sigma().to_csv())?;
    let mut seen = Vec::new();
    for b in bounds {
        if seen.contains(&b.n) {
            continue;
        }
        seen.push(b.n);
        let sample = model.sample(b.n, &mut coverage::trial_stream(seed, 0))?;
        let path = dir.join(format!("sigma_hat_n{}_trial0.csv", b.n));
        crate::write_text(&path, &sample.second_moment()?.to_csv())?;
    }
    Ok(())
}
