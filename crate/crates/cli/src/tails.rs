//! `verify-tails`: Monte Carlo falsification of the tail inequalities.

use anyhow::{Context, Result};
use randesign::tail::reference::TailScenario;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DELTAS: [f64; 3] = [0.1, 0.05, 0.01];
pub const DEFAULT_TRIALS: usize = 10_000;

fn default_deltas() -> Vec<f64> {
    DEFAULT_DELTAS.to_vec()
}

/// A scenario with its δ-grid and trial count.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TailRun {
    #[serde(flatten)]
    pub scenario: TailScenario,
    #[serde(default = "default_deltas")]
    pub delta_grid: Vec<f64>,
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TailFile {
    Many(Vec<TailRun>),
    Wrapped { scenarios: Vec<TailRun> },
    One(TailRun),
}

pub fn parse_runs(text: &str) -> Result<Vec<TailRun>> {
    let file: TailFile = serde_json::from_str(text).context("parsing tail scenario file")?;
    Ok(match file {
        TailFile::Many(v) | TailFile::Wrapped { scenarios: v } => v,
        TailFile::One(r) => vec![r],
    })
}

/// Every built-in scenario on the default δ-grid.
pub fn default_runs() -> Vec<TailRun> {
    TailScenario::defaults()
        .into_iter()
        .map(|scenario| TailRun {
            scenario,
            delta_grid: default_deltas(),
            trials: None,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub lemma: &'static str,
    pub delta: f64,
    pub threshold: f64,
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    pub se: f64,
    /// 95% normal-approximation interval for the rate.
    pub interval: (f64, f64),
    /// `rate ≤ δ + 3·SE`.
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub seed: u64,
    pub rows: Vec<TailRow>,
    pub all_pass: bool,
}

pub fn verify_tails(runs: &[TailRun], seed: u64, trials_override: Option<usize>) -> Result<TailReport> {
    let mut rows = Vec::new();
    for run in runs {
        let trials = trials_override.or(run.trials).unwrap_or(DEFAULT_TRIALS);
        for &delta in &run.delta_grid {
            let threshold = run.scenario.threshold(delta)?.threshold;
            let est = run
                .scenario
                .violation_rate(delta, trials, seed)
                .with_context(|| format!("{} at delta={delta}", run.scenario.lemma()))?;
            log::info!("{} delta={delta}: rate {}", run.scenario.lemma(), est.rate);
            rows.push(TailRow {
                lemma: run.scenario.lemma(),
                delta,
                threshold,
                trials: est.trials,
                violations: est.violations,
                rate: est.rate,
                se: est.se_at(delta),
                interval: est.interval(1.96),
                pass: est.consistent_with(delta),
            });
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(TailReport { seed, rows, all_pass })
}
