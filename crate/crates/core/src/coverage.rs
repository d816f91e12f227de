//! Monte Carlo coverage of the risk bounds.
//!
//! A bound is evaluated once per `(estimator, n, δ)` from the model's exact
//! constants; each trial draws a fresh sample from the stream
//! `(master seed, "trial", index)`, fits, and compares the realized excess
//! loss with the bound.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, check_ols_decomposition, check_ridge_decomposition, DecompositionReport};
use crate::error::{Error, Result};
use crate::estimators::{excess_loss, ols_fit, ridge_fit};
use crate::population::{ModelConstants, PopulationModel, RidgeConstants};
use crate::risk::{
    self, BoundReport, Condition, OlsBoundInputs, RidgeBoundInputs,
};
use crate::rng::Stream;
use crate::tail::McEstimate;

/// Stream label of per-trial samples.
pub const TRIAL_LABEL: &str = "trial";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    Ols,
    Ridge { lambda: f64 },
}

impl Estimator {
    pub fn lambda(&self) -> f64 {
        match self {
            Estimator::Ols => 0.0,
            Estimator::Ridge { lambda } => *lambda,
        }
    }
}

/// Which design condition feeds the OLS matrix-error factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionChoice {
    /// The available condition with the smaller sample threshold.
    #[default]
    Auto,
    Subgaussian,
    BoundedLeverage,
}

pub fn select_condition(
    constants: &ModelConstants,
    choice: ConditionChoice,
    d: usize,
    delta: f64,
) -> Result<Condition> {
    let sub = constants.rho_1cov.map(|rho| Condition::Subgaussian { rho });
    let lev = constants.rho_2cov().ok().map(|rho| Condition::BoundedLeverage { rho });
    match choice {
        ConditionChoice::Subgaussian => sub.ok_or(Error::Unavailable("rho_1cov")),
        ConditionChoice::BoundedLeverage => lev.ok_or(Error::Unavailable("rho_2cov")),
        ConditionChoice::Auto => {
            let mut best: Option<(f64, Condition)> = None;
            for c in [sub, lev].into_iter().flatten() {
                let t = risk::sample_threshold(c, d, delta)?;
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, c));
                }
            }
            best.map(|(_, c)| c)
                .ok_or(Error::Unavailable("design condition constant"))
        }
    }
}

pub fn ols_bound_inputs(
    model: &PopulationModel,
    constants: &ModelConstants,
    choice: ConditionChoice,
    n: usize,
    delta: f64,
) -> Result<OlsBoundInputs> {
    let d = model.dim();
    Ok(OlsBoundInputs {
        d,
        n,
        delta,
        sigma_noise: constants.sigma_noise,
        condition: select_condition(constants, choice, d, delta)?,
        b_bias: constants.b_bias,
        e_term: model.bias().weighted_moment(),
    })
}

fn unbounded(what: &str) -> Error {
    Error::Inapplicable {
        bound: "ridge",
        reason: format!("{what} is unbounded for this design"),
        threshold: f64::INFINITY,
    }
}

pub fn ridge_bound_inputs(
    model: &PopulationModel,
    rc: &RidgeConstants,
    n: usize,
    delta: f64,
) -> Result<RidgeBoundInputs> {
    if !model.bias().is_zero() {
        return Err(Error::Inapplicable {
            bound: "ridge",
            reason: "model: the ridge bound needs a well-specified model (zero approximation error)".into(),
            threshold: 0.0,
        });
    }
    Ok(RidgeBoundInputs {
        spectrum: model.spectrum().psd_values()?.as_slice().to_vec(),
        beta_eigenbasis: model.beta_eigenbasis(),
        lambda: rc.lambda,
        n,
        delta,
        sigma_noise: model.noise().sigma_noise(),
        rho_lambda: rc.rho_lambda.ok_or_else(|| unbounded("ridge leverage"))?,
        b_bias_lambda: rc.b_bias_lambda.ok_or_else(|| unbounded("ridge bias"))?,
        fourth_moment: rc.fourth_moment,
        second_term_moment: Some(rc.second_term_moment),
    })
}

/// The applicable theorem for an estimator: correct-model or misspecified
/// OLS by whether the model has approximation error, or ridge.
pub fn bound_for(
    model: &PopulationModel,
    estimator: Estimator,
    choice: ConditionChoice,
    n: usize,
    delta: f64,
) -> Result<BoundReport> {
    match estimator {
        Estimator::Ols => {
            let constants = model.model_constants(&[])?;
            let inputs = ols_bound_inputs(model, &constants, choice, n, delta)?;
            if model.bias().is_zero() {
                risk::theorem_correct_model(&inputs)
            } else {
                risk::theorem_misspecified(&inputs)
            }
        }
        Estimator::Ridge { lambda } => {
            let constants = model.model_constants(&[lambda])?;
            let rc = &constants.ridge[0];
            risk::theorem_ridge(&ridge_bound_inputs(model, rc, n, delta)?)
        }
    }
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub n: usize,
    pub delta: f64,
    pub excess_loss: f64,
    pub bound_total: f64,
    pub violation: bool,
    /// Smallest slack of the decomposition inequalities on this sample.
    pub slack_decomp: f64,
    /// Realized `‖Σ^{1/2}Σ̂⁻¹Σ^{1/2}‖` (λ-whitened for ridge).
    pub matrix_error: f64,
    pub wall_ms: Option<f64>,
    /// Decomposition checks on this sample.
    #[serde(skip)]
    pub checks: DecompositionReport,
}

pub fn trial_stream(master_seed: u64, trial: u64) -> Stream {
    Stream::new(master_seed, TRIAL_LABEL, trial)
}

pub fn run_trial(
    model: &PopulationModel,
    estimator: Estimator,
    bound: &BoundReport,
    master_seed: u64,
    trial: u64,
    record_wall_time: bool,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let n = bound.n;
    let sample = model.sample(n, &mut trial_stream(master_seed, trial))?;
    let (fit, report) = match estimator {
        Estimator::Ols => (ols_fit(&sample)?, check_ols_decomposition(&sample, model)?),
        Estimator::Ridge { lambda } => (
            ridge_fit(&sample, lambda)?,
            check_ridge_decomposition(&sample, model, lambda)?,
        ),
    };
    let excess = snap_roundoff(excess_loss(&fit.coefficients, model)?, model)?;
    let matrix_error =
        diagnostics::realized_matrix_error(model.sigma(), &fit.second_moment, estimator.lambda())?;
    Ok(TrialOutcome {
        trial,
        n,
        delta: bound.delta,
        excess_loss: excess,
        bound_total: bound.total,
        violation: excess > bound.total,
        slack_decomp: report.min_inequality_slack(),
        matrix_error,
        wall_ms: record_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
        checks: report,
    })
}

/// Excess losses below `(64ε)²‖β‖²_Σ` are floating-point residue of an
/// exact fit and are reported as 0.
fn snap_roundoff(excess: f64, model: &PopulationModel) -> Result<f64> {
    let floor = (64.0 * f64::EPSILON).powi(2) * model.sigma().quad_form(model.population_beta())?;
    Ok(if excess <= floor { 0.0 } else { excess })
}

/// Trials `0..trials` in parallel, returned in trial order.
pub fn run_trials(
    model: &PopulationModel,
    estimator: Estimator,
    bound: &BoundReport,
    master_seed: u64,
    trials: u64,
    record_wall_time: bool,
) -> Result<Vec<TrialOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|t| run_trial(model, estimator, bound, master_seed, t, record_wall_time))
        .collect()
}

/// Coverage and excess-loss statistics of a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub n: usize,
    pub delta: f64,
    pub theorem: &'static str,
    /// `1 − delta_total`.
    pub level: f64,
    pub trials: usize,
    pub violations: usize,
    pub coverage: f64,
    /// Binomial standard error of the coverage at the stated level.
    pub se_at_level: f64,
    pub bound_total: f64,
    pub mean_excess: f64,
    pub quantiles: Vec<Quantile>,
}

impl CoverageSummary {
    /// Coverage is at least the level, allowing three standard errors.
    pub fn meets_level(&self) -> bool {
        self.coverage >= self.level - 3.0 * self.se_at_level
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantile {
    pub p: f64,
    pub value: f64,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(outcomes: &[TrialOutcome], bound: &BoundReport) -> CoverageSummary {
    let trials = outcomes.len();
    let violations = outcomes.iter().filter(|o| o.violation).count();
    let est = McEstimate::from_counts(violations, trials);
    let mut xs: Vec<f64> = outcomes.iter().map(|o| o.excess_loss).collect();
    xs.sort_by(f64::total_cmp);
    let mean_excess = if trials == 0 {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / trials as f64
    };
    CoverageSummary {
        n: bound.n,
        delta: bound.delta,
        theorem: bound.theorem,
        level: 1.0 - bound.delta_total,
        trials,
        violations,
        coverage: 1.0 - est.rate,
        se_at_level: est.se_at(bound.delta_total.min(1.0)),
        bound_total: bound.total,
        mean_excess,
        quantiles: QUANTILE_LEVELS
            .iter()
            .map(|&p| Quantile { p, value: quantile(&xs, p) })
            .collect(),
    }
}
