//! `bounds`: pure evaluation of bound scenarios, one JSON record each.

use std::path::Path;

use anyhow::Result;
use randesign::coverage::{self, ConditionChoice, Estimator};
use randesign::risk::{self, Condition, OlsBoundInputs, RidgeBoundInputs};
use randesign::{BoundReport, DVector, Error};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::ModelRef;

/// One scenario. The OLS kinds take either a design `condition` or an
/// explicit `matrix-error` factor.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "theorem", rename_all = "kebab-case")]
pub enum Scenario {
    #[serde(rename_all = "kebab-case")]
    CorrectModel {
        d: usize,
        n: usize,
        delta: f64,
        sigma_noise: f64,
        condition: Option<Condition>,
        matrix_error: Option<f64>,
    },
    #[serde(rename_all = "kebab-case")]
    Misspecified {
        d: usize,
        n: usize,
        delta: f64,
        sigma_noise: f64,
        b_bias: f64,
        e_term: f64,
        condition: Option<Condition>,
        matrix_error: Option<f64>,
    },
    #[serde(rename_all = "kebab-case")]
    Ridge {
        spectrum: Vec<f64>,
        /// `β` in the eigenbasis of `Σ`.
        beta: Vec<f64>,
        lambda: f64,
        n: usize,
        delta: f64,
        sigma_noise: f64,
        rho_lambda: f64,
        b_bias_lambda: f64,
        fourth_moment: f64,
        second_term_moment: Option<f64>,
    },
    /// Constants taken from a population model.
    #[serde(rename_all = "kebab-case")]
    Model {
        model: ModelRef,
        estimator: Estimator,
        n: usize,
        delta: f64,
        #[serde(default)]
        condition: ConditionChoice,
    },
}

fn missing_factor() -> Error {
    Error::Shape("OLS scenario needs a `condition` or a `matrix-error`".into())
}

pub fn evaluate(scenario: &Scenario, base: &Path) -> Result<BoundReport> {
    Ok(match scenario {
        &Scenario::CorrectModel { d, n, delta, sigma_noise, condition, matrix_error } => match (matrix_error, condition) {
            (Some(k), _) => risk::correct_model_with_factor(k, sigma_noise, d, delta, n)?,
            (None, Some(condition)) => risk::theorem_correct_model(&OlsBoundInputs {
                d,
                n,
                delta,
                sigma_noise,
                condition,
                b_bias: Some(0.0),
                e_term: 0.0,
            })?,
            (None, None) => return Err(missing_factor().into()),
        },
        &Scenario::Misspecified { d, n, delta, sigma_noise, b_bias, e_term, condition, matrix_error } => {
            match (matrix_error, condition) {
                (Some(k), _) => risk::misspecified_with_factor(k, sigma_noise, b_bias, e_term, d, delta, n)?,
                (None, Some(condition)) => risk::theorem_misspecified(&OlsBoundInputs {
                    d,
                    n,
                    delta,
                    sigma_noise,
                    condition,
                    b_bias: Some(b_bias),
                    e_term,
                })?,
                (None, None) => return Err(missing_factor().into()),
            }
        }
        Scenario::Ridge {
            spectrum,
            beta,
            lambda,
            n,
            delta,
            sigma_noise,
            rho_lambda,
            b_bias_lambda,
            fourth_moment,
            second_term_moment,
        } => risk::theorem_ridge(&RidgeBoundInputs {
            spectrum: spectrum.clone(),
            beta_eigenbasis: DVector::from_column_slice(beta),
            lambda: *lambda,
            n: *n,
            delta: *delta,
            sigma_noise: *sigma_noise,
            rho_lambda: *rho_lambda,
            b_bias_lambda: *b_bias_lambda,
            fourth_moment: *fourth_moment,
            second_term_moment: *second_term_moment,
        })?,
        Scenario::Model { model, estimator, n, delta, condition } => {
            let model = model.load(base)?;
            coverage::bound_for(&model, *estimator, *condition, *n, *delta)?
        }
    })
}

/// Scenario values from a file holding an array or `{"scenarios": [...]}`.
pub fn scenario_values(text: &str) -> Result<Vec<Value>> {
    let v: Value = serde_json::from_str(text)?;
    Ok(match v {
        Value::Array(items) => items,
        Value::Object(mut map) if map.contains_key("scenarios") => match map.remove("scenarios") {
            Some(Value::Array(items)) => items,
            _ => anyhow::bail!("`scenarios` must be an array"),
        },
        other => vec![other],
    })
}

/// One output record per scenario, in input order. Failures become
/// `inapplicable` or `error` records rather than aborting the stream.
pub fn evaluate_all(values: &[Value], base: &Path) -> Vec<Value> {
    values
        .iter()
        .enumerate()
        .map(|(index, v)| {
            let result = serde_json::from_value::<Scenario>(v.clone())
                .map_err(anyhow::Error::from)
                .and_then(|s| evaluate(&s, base));
            match result {
                Ok(report) => json!({ "index": index, "status": "ok", "report": report }),
                Err(e) => match e.downcast_ref::<Error>() {
                    Some(Error::Inapplicable { bound, reason, threshold }) => json!({
                        "index": index,
                        "status": "inapplicable",
                        "bound": bound,
                        "reason": reason,
                        "threshold": threshold,
                    }),
                    _ => json!({ "index": index, "status": "error", "message": format!("{e:#}") }),
                },
            }
        })
        .collect()
}
