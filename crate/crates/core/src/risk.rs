//! Sample-size thresholds, matrix-error factors and the full excess-loss
//! bounds for OLS (well-specified and misspecified) and ridge regression.
//!
//! Thresholds and factors are exact reals; rounding sample sizes up is left
//! to the caller. Bounds whose preconditions fail return
//! [`Error::Inapplicable`] rather than an infinite sentinel.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{delta_unit, nonnegative, open_interval, Error, Result};
use crate::estimators::fixed_design_highprob_dims;

const LOG41: f64 = 3.713572066704308;

/// Which regularity condition on the design a bound is instantiated under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "kebab-case")]
pub enum Condition {
    /// Subgaussian whitened projections with constant `ρ_1cov`.
    Subgaussian { rho: f64 },
    /// Almost-sure leverage bound `ρ_2cov`.
    BoundedLeverage { rho: f64 },
}

impl Condition {
    pub fn rho(&self) -> f64 {
        match *self {
            Condition::Subgaussian { rho } | Condition::BoundedLeverage { rho } => rho,
        }
    }

    fn validate(&self) -> Result<()> {
        let rho = self.rho();
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::Domain {
                name: "rho",
                value: rho,
                domain: "[1, inf)",
            });
        }
        Ok(())
    }
}

fn check_d(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Shape("d must be >= 1".into()));
    }
    Ok(d as f64)
}

fn subgaussian_t(d: f64, delta: f64) -> f64 {
    d * LOG41 + (2.0 / delta).ln()
}

/// `n₁ = 70ρ²(d·log 41 + log(2/δ))` or `n₂ = 4ρ²d·log(d/δ)`.
pub fn sample_threshold(condition: Condition, d: usize, delta: f64) -> Result<f64> {
    condition.validate()?;
    delta_unit(delta)?;
    let d = check_d(d)?;
    let rho = condition.rho();
    Ok(match condition {
        Condition::Subgaussian { .. } => 70.0 * rho * rho * subgaussian_t(d, delta),
        Condition::BoundedLeverage { .. } => 4.0 * rho * rho * d * (d / delta).ln(),
    })
}

fn inapplicable(bound: &'static str, reason: String, threshold: f64) -> Error {
    Error::Inapplicable {
        bound,
        reason,
        threshold,
    }
}

/// `K₁ = 1/(1 − (10ρ/9)(√(32t/n) + 2t/n))`, `t = d·log 41 + log(2/δ)`.
pub fn k1(rho: f64, d: usize, delta: f64, n: usize) -> Result<f64> {
    matrix_factor(Condition::Subgaussian { rho }, d, delta, n)
}

/// `K₂ = 1/(1 − √(2ρ²d·log(d/δ)/n))`.
pub fn k2(rho: f64, d: usize, delta: f64, n: usize) -> Result<f64> {
    matrix_factor(Condition::BoundedLeverage { rho }, d, delta, n)
}

/// `K₁` or `K₂` according to `condition`; requires `n` above the threshold.
pub fn matrix_factor(condition: Condition, d: usize, delta: f64, n: usize) -> Result<f64> {
    let threshold = sample_threshold(condition, d, delta)?;
    let nf = n as f64;
    if nf <= threshold {
        return Err(inapplicable(
            "matrix-factor",
            format!("n = {n} is not above the sample-size threshold {threshold:.4}"),
            threshold,
        ));
    }
    let rho = condition.rho();
    let d = d as f64;
    let shrink = match condition {
        Condition::Subgaussian { .. } => {
            let t = subgaussian_t(d, delta);
            10.0 * rho / 9.0 * ((32.0 * t / nf).sqrt() + 2.0 * t / nf)
        }
        Condition::BoundedLeverage { .. } => (2.0 * rho * rho * d * (d / delta).ln() / nf).sqrt(),
    };
    if shrink >= 1.0 {
        return Err(inapplicable(
            "matrix-factor",
            format!("denominator {:.4} is not positive", 1.0 - shrink),
            threshold,
        ));
    }
    Ok(1.0 / (1.0 - shrink))
}

/// `K·σ²(d + 2√(d·log(1/δ)) + 2·log(1/δ))/n`.
pub fn noise_contribution(k: f64, sigma_noise: f64, d: usize, delta: f64, n: usize) -> Result<f64> {
    Ok(k * fixed_design_highprob_dims(d, n, sigma_noise, delta)?)
}

/// `(leading, remainder)` of the approximation contribution:
/// `K²·4·E_term(1 + 8·log(1/δ))/n` and `K²·3B²d·log²(1/δ)/n²`.
pub fn approx_contribution(
    k: f64,
    e_term: f64,
    b_bias: f64,
    d: usize,
    delta: f64,
    n: usize,
) -> Result<(f64, f64)> {
    nonnegative("e_term", e_term)?;
    nonnegative("b_bias", b_bias)?;
    let l = (1.0 / delta).ln();
    delta_unit(delta)?;
    let n = n as f64;
    let k2 = k * k;
    Ok((
        k2 * 4.0 * e_term * (1.0 + 8.0 * l) / n,
        k2 * 3.0 * b_bias * b_bias * d as f64 * l * l / (n * n),
    ))
}

/// Upper bound on `E[‖Σ^{-1/2}X·bias(X)‖²]`.
///
/// Bounded leverage gives `ρ₂²·d·E[bias²]`. Under subgaussian projections,
/// with `L = log max{B²d/(λρ₁E[bias²]), 1}` for a free `λ > 0`, the bound is
/// `ρ₁·d·E[bias²]·(1 + √(L/d) + (L + λ)/d)`.
pub fn approx_second_moment_bound(
    condition: Condition,
    d: usize,
    bias_second_moment: f64,
    b_bias: f64,
    tradeoff: f64,
) -> Result<f64> {
    condition.validate()?;
    nonnegative("bias_second_moment", bias_second_moment)?;
    nonnegative("b_bias", b_bias)?;
    let d = check_d(d)?;
    if bias_second_moment == 0.0 {
        return Ok(0.0);
    }
    let rho = condition.rho();
    Ok(match condition {
        Condition::BoundedLeverage { .. } => rho * rho * d * bias_second_moment,
        Condition::Subgaussian { .. } => {
            open_interval("tradeoff", tradeoff, 0.0, f64::INFINITY, "(0, inf)")?;
            let l = (b_bias * b_bias * d / (tradeoff * rho * bias_second_moment))
                .max(1.0)
                .ln();
            rho * d * bias_second_moment * (1.0 + (l / d).sqrt() + (l + tradeoff) / d)
        }
    })
}

/// `(d₁,λ, d₂,λ) = (Σⱼ λⱼ/(λⱼ+λ), Σⱼ (λⱼ/(λⱼ+λ))²)`; zero eigenvalues
/// contribute nothing.
pub fn effective_dims(spectrum: &[f64], lambda: f64) -> Result<(f64, f64)> {
    nonnegative("lambda", lambda)?;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &v in spectrum {
        nonnegative("eigenvalue", v)?;
        if v > 0.0 {
            let r = v / (v + lambda);
            d1 += r;
            d2 += r * r;
        }
    }
    Ok((d1, d2))
}

fn ridge_q(rho: f64, d1: f64, delta: f64) -> f64 {
    rho * rho * d1 * (d1 / delta).ln()
}

/// `K_λ = 1/(1 − (√(4q/n) + q/n))` with `q = ρ_λ²d₁,λ·log(d₁,λ/δ)`;
/// requires `n ≥ 16q`, where `K_λ ≤ 16/7`.
pub fn ridge_k(rho_lambda: f64, d1: f64, delta: f64, n: usize) -> Result<f64> {
    Condition::BoundedLeverage { rho: rho_lambda }.validate()?;
    delta_unit(delta)?;
    open_interval("d1", d1, 0.0, f64::INFINITY, "(0, inf)")?;
    let q = ridge_q(rho_lambda, d1, delta);
    let nf = n as f64;
    if nf < 16.0 * q {
        return Err(inapplicable(
            "ridge",
            format!("sample size: n = {n} is below 16·ρ²·d₁·log(d₁/δ) = {:.4}", 16.0 * q),
            16.0 * q,
        ));
    }
    let q = q.max(0.0);
    Ok(1.0 / (1.0 - ((4.0 * q / nf).sqrt() + q / nf)))
}

/// Inputs of the OLS bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsBoundInputs {
    pub d: usize,
    pub n: usize,
    pub delta: f64,
    pub sigma_noise: f64,
    pub condition: Condition,
    /// `B_bias`; `None` when the approximation error is unbounded.
    pub b_bias: Option<f64>,
    /// `E[‖Σ^{-1/2}X·bias(X)‖²]`.
    pub e_term: f64,
}

/// Inputs of the ridge bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeBoundInputs {
    /// Eigenvalues of `Σ`.
    pub spectrum: Vec<f64>,
    /// `β` in the eigenbasis of `Σ`.
    pub beta_eigenbasis: DVector<f64>,
    pub lambda: f64,
    pub n: usize,
    pub delta: f64,
    pub sigma_noise: f64,
    pub rho_lambda: f64,
    pub b_bias_lambda: f64,
    /// `E[‖Σλ^{-1/2}X‖⁴]`.
    pub fourth_moment: f64,
    /// Exact `E[‖Σλ^{-1/2}(X·bias_λ(X) − λβλ)‖²]` when known; otherwise
    /// its bound `‖βλ−β‖²_Σ(2ρ_λ²d₁,λ + 2)` is used.
    pub second_term_moment: Option<f64>,
}

/// Named bound components and their combinations.
///
/// `total` is the square of the sum-of-norms form (`(√a + √b)²`, or with
/// three terms for ridge); `total_squared_form` is `2(a + b)` or
/// `3(a + b + c)`. Both hold on the same event of probability
/// `1 − delta_total`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: &'static str,
    pub delta: f64,
    pub delta_total: f64,
    pub n: usize,
    /// `K` bounding `‖Σ^{1/2}Σ̂⁻¹Σ^{1/2}‖` (or its λ-whitened analog).
    pub matrix_error: f64,
    /// `K` exceeds the theorem's stated cap (5 for OLS, 4 for ridge).
    pub matrix_error_flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx: Option<f64>,
    /// The `O(1/n²)` part of `approx`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx_remainder: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub third: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frobenius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral: Option<f64>,
    /// `(d₁,λ, d₂,λ)` for ridge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effective_dims: Option<(f64, f64)>,
    pub total: f64,
    pub total_squared_form: f64,
}

impl BoundReport {
    fn new(theorem: &'static str, delta: f64, factor: f64, n: usize, k: f64, cap: f64) -> Self {
        BoundReport {
            theorem,
            delta,
            delta_total: factor * delta,
            n,
            matrix_error: k,
            matrix_error_flagged: k > cap,
            noise: None,
            approx: None,
            approx_remainder: None,
            first: None,
            second: None,
            third: None,
            frobenius: None,
            spectral: None,
            effective_dims: None,
            total: 0.0,
            total_squared_form: 0.0,
        }
    }

    /// Components entering the excess-loss combination.
    pub fn terms(&self) -> Vec<f64> {
        match self.theorem {
            "ridge" => vec![
                self.first.unwrap_or(0.0),
                self.second.unwrap_or(0.0),
                self.third.unwrap_or(0.0),
            ],
            "misspecified" => vec![self.approx.unwrap_or(0.0), self.noise.unwrap_or(0.0)],
            _ => vec![self.noise.unwrap_or(0.0)],
        }
    }
}

fn combine(report: &mut BoundReport) {
    let terms = report.terms();
    let root: f64 = terms.iter().map(|t| t.sqrt()).sum();
    report.total = if terms.len() == 1 { terms[0] } else { root * root };
    report.total_squared_form = if terms.len() == 1 {
        terms[0]
    } else {
        terms.len() as f64 * terms.iter().sum::<f64>()
    };
}

fn validate_ols(inputs: &OlsBoundInputs) -> Result<()> {
    inputs.condition.validate()?;
    delta_unit(inputs.delta)?;
    nonnegative("sigma_noise", inputs.sigma_noise)?;
    nonnegative("e_term", inputs.e_term)?;
    check_d(inputs.d)?;
    Ok(())
}

/// Well-specified OLS: with probability `1 − 2δ`,
/// `‖β̂ − β‖²_Σ ≤ K·σ²(d + 2√(d·log(1/δ)) + 2·log(1/δ))/n`.
pub fn theorem_correct_model(inputs: &OlsBoundInputs) -> Result<BoundReport> {
    validate_ols(inputs)?;
    let k = matrix_factor(inputs.condition, inputs.d, inputs.delta, inputs.n)?;
    correct_model_with_factor(k, inputs.sigma_noise, inputs.d, inputs.delta, inputs.n)
}

fn check_factor(k: f64) -> Result<()> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::Domain {
            name: "matrix_error",
            value: k,
            domain: "[1, inf)",
        });
    }
    Ok(())
}

/// The well-specified bound at a given matrix-error factor `K`.
pub fn correct_model_with_factor(k: f64, sigma_noise: f64, d: usize, delta: f64, n: usize) -> Result<BoundReport> {
    check_factor(k)?;
    let mut report = BoundReport::new("correct-model", delta, 2.0, n, k, 5.0);
    report.noise = Some(noise_contribution(k, sigma_noise, d, delta, n)?);
    combine(&mut report);
    Ok(report)
}

/// Misspecified OLS: approximation and noise contributions, combined as
/// `‖β̂ − β‖_Σ ≤ √approx + √noise` with probability `1 − 3δ` (one `δ` per
/// sub-event).
pub fn theorem_misspecified(inputs: &OlsBoundInputs) -> Result<BoundReport> {
    validate_ols(inputs)?;
    let b_bias = inputs.b_bias.ok_or_else(|| {
        inapplicable(
            "misspecified",
            "approximation error is unbounded (no finite B_bias)".into(),
            f64::INFINITY,
        )
    })?;
    let k = matrix_factor(inputs.condition, inputs.d, inputs.delta, inputs.n)?;
    misspecified_with_factor(k, inputs.sigma_noise, b_bias, inputs.e_term, inputs.d, inputs.delta, inputs.n)
}

/// The misspecified bound at a given matrix-error factor `K`.
pub fn misspecified_with_factor(
    k: f64,
    sigma_noise: f64,
    b_bias: f64,
    e_term: f64,
    d: usize,
    delta: f64,
    n: usize,
) -> Result<BoundReport> {
    check_factor(k)?;
    nonnegative("b_bias", b_bias)?;
    let mut report = BoundReport::new("misspecified", delta, 3.0, n, k, 5.0);
    let (lead, rem) = approx_contribution(k, e_term, b_bias, d, delta, n)?;
    report.approx = Some(lead + rem);
    report.approx_remainder = Some(rem);
    report.noise = Some(noise_contribution(k, sigma_noise, d, delta, n)?);
    combine(&mut report);
    Ok(report)
}

/// `‖βλ − β‖²_Σ = Σⱼ βⱼ²λⱼ/(1 + λⱼ/λ)²`.
pub fn ridge_first_term(spectrum: &[f64], beta_eigenbasis: &DVector<f64>, lambda: f64) -> Result<f64> {
    open_interval("lambda", lambda, 0.0, f64::INFINITY, "(0, inf)")?;
    crate::linalg::check_dim(spectrum.len(), beta_eigenbasis.len())?;
    Ok(spectrum
        .iter()
        .zip(beta_eigenbasis.iter())
        .map(|(&v, &b)| b * b * v / (1.0 + v / lambda).powi(2))
        .sum())
}

/// Ridge regression: first, second and third terms with probability
/// `1 − 4δ`, plus the spectral and Frobenius bounds on `Δλ`.
///
/// The third term uses `max(√(d₂‖Δλ‖_F), √d₂·‖Δλ‖_F)` for the trace
/// correction, which dominates both forms in which it is commonly written.
pub fn theorem_ridge(inputs: &RidgeBoundInputs) -> Result<BoundReport> {
    let delta = inputs.delta;
    if !(delta > 0.0 && delta < 0.125) {
        return Err(inapplicable(
            "ridge",
            format!("delta: {delta} is outside (0, 1/8)"),
            0.125,
        ));
    }
    nonnegative("sigma_noise", inputs.sigma_noise)?;
    nonnegative("b_bias_lambda", inputs.b_bias_lambda)?;
    nonnegative("fourth_moment", inputs.fourth_moment)?;
    let lambda = inputs.lambda;
    open_interval("lambda", lambda, 0.0, f64::INFINITY, "(0, inf)")?;
    let lambda_max = inputs.spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lambda > lambda_max {
        return Err(inapplicable(
            "ridge",
            format!("lambda: {lambda} exceeds the largest eigenvalue {lambda_max}"),
            lambda_max,
        ));
    }
    let (d1, d2) = effective_dims(&inputs.spectrum, lambda)?;
    let rho = inputs.rho_lambda;
    let k = ridge_k(rho, d1, delta, inputs.n)?;
    let n = inputs.n as f64;
    let l = (1.0 / delta).ln();
    let q = ridge_q(rho, d1, delta);
    let r2d1 = rho * rho * d1;

    let first = ridge_first_term(&inputs.spectrum, &inputs.beta_eigenbasis, lambda)?;
    let m2 = inputs
        .second_term_moment
        .unwrap_or(first * (2.0 * r2d1 + 2.0));
    let second = k * k
        * ((4.0 + 32.0 * l) * m2 / n
            + 6.0 * (r2d1 * inputs.b_bias_lambda.powi(2) + first) * l * l / (n * n));

    let spectral = (4.0 * q / n).sqrt() + 2.0 * q / (3.0 * n);
    let frobenius = (1.0 + (8.0 * l).sqrt()) * ((inputs.fourth_moment - d2).max(0.0) / n).sqrt()
        + 4.0 / 3.0 * (r2d1 + d2.sqrt()) * l / n;
    let correction = (d2 * frobenius).sqrt().max(d2.sqrt() * frobenius);
    let s2 = inputs.sigma_noise.powi(2);
    let trace_part = d2 + correction;
    let third = k * k * s2 / n * trace_part
        + 2.0 * k.powf(1.5) * s2 / n * (trace_part * l).sqrt()
        + 2.0 * k * s2 * l / n;

    let mut report = BoundReport::new("ridge", delta, 4.0, inputs.n, k, 4.0);
    report.first = Some(first);
    report.second = Some(second);
    report.third = Some(third);
    report.frobenius = Some(frobenius);
    report.spectral = Some(spectral);
    report.effective_dims = Some((d1, d2));
    combine(&mut report);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const E_INV: f64 = 0.36787944117144233;

    #[test]
    fn given_factor_examples() {
        let r = correct_model_with_factor(2.0, 1.0, 4, E_INV, 100).unwrap();
        assert_relative_eq!(r.total, 0.20, epsilon = 1e-12);
        let r = misspecified_with_factor(1.0, 0.0, 0.0, 1.0, 4, E_INV, 100).unwrap();
        assert_relative_eq!(r.approx.unwrap(), 0.36, epsilon = 1e-12);
        assert!(correct_model_with_factor(0.5, 1.0, 4, E_INV, 100).is_err());
    }

    fn lev(rho: f64) -> Condition {
        Condition::BoundedLeverage { rho }
    }

    fn sg(rho: f64) -> Condition {
        Condition::Subgaussian { rho }
    }

    #[test]
    fn log41_constant() {
        assert_relative_eq!(LOG41, 41f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn threshold_examples() {
        let n1 = sample_threshold(sg(1.0), 1, 0.2).unwrap();
        assert_relative_eq!(n1, 70.0 * (41f64.ln() + 10f64.ln()), epsilon = 1e-9);
        assert_relative_eq!(n1, 421.13, epsilon = 0.01);
        let n2 = sample_threshold(lev(1.0), 2, 2.0 * (-2.0f64).exp()).unwrap();
        assert_relative_eq!(n2, 16.0, epsilon = 1e-12);
        for c in [sg(1.3), lev(1.3)] {
            let doubled = match c {
                Condition::Subgaussian { rho } => sg(2.0 * rho),
                Condition::BoundedLeverage { rho } => lev(2.0 * rho),
            };
            assert_relative_eq!(
                sample_threshold(doubled, 3, 0.1).unwrap(),
                4.0 * sample_threshold(c, 3, 0.1).unwrap(),
                max_relative = 1e-14
            );
        }
        assert!(sample_threshold(sg(0.5), 3, 0.1).is_err());
    }

    #[test]
    fn k_examples() {
        let delta = 2.0 * (-2.0f64).exp();
        assert_relative_eq!(k2(1.0, 2, delta, 32).unwrap(), 2.0, epsilon = 1e-12);
        let n1 = sample_threshold(sg(1.0), 2, 0.1).unwrap();
        assert_relative_eq!(100.0 * n1, 72960.0, epsilon = 1.0);
        assert_relative_eq!(k1(1.0, 2, 0.1, 72960).unwrap(), 1.082, epsilon = 5e-4);
        assert!(matches!(k2(1.0, 2, delta, 16), Err(Error::Inapplicable { threshold, .. }) if (threshold - 16.0).abs() < 1e-9));
        assert!(k1(1.0, 2, 0.1, 700).is_err());
    }

    #[test]
    fn k_limits() {
        for c in [sg(1.5), lev(1.5)] {
            let t = sample_threshold(c, 4, 0.05).unwrap();
            let big = (1e8 * t) as usize;
            let k = matrix_factor(c, 4, 0.05, big).unwrap();
            assert!((k - 1.0).abs() <= 1e-3, "{k}");
        }
        let q = ridge_q(1.2, 3.0, 0.05);
        assert!((ridge_k(1.2, 3.0, 0.05, (1e8 * q) as usize).unwrap() - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn correct_model_examples() {
        // K = 2 through the bounded-leverage factor: log(d/δ) = 2 with d = 2
        let k = 2.0;
        assert_relative_eq!(noise_contribution(k, 1.0, 4, E_INV, 100).unwrap(), 0.20, epsilon = 1e-12);
        let inputs = OlsBoundInputs {
            d: 2,
            n: 32,
            delta: 2.0 * (-2.0f64).exp(),
            sigma_noise: 0.0,
            condition: lev(1.0),
            b_bias: Some(0.0),
            e_term: 0.0,
        };
        let r = theorem_correct_model(&inputs).unwrap();
        assert_eq!(r.noise, Some(0.0));
        assert_eq!(r.total, 0.0);
        assert_relative_eq!(r.matrix_error, 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.delta_total, 2.0 * inputs.delta, epsilon = 1e-15);
    }

    #[test]
    fn misspecified_examples() {
        let (lead, rem) = approx_contribution(1.0, 1.0, 0.0, 3, E_INV, 100).unwrap();
        assert_relative_eq!(lead + rem, 0.36, epsilon = 1e-12);
        let inputs = OlsBoundInputs {
            d: 3,
            n: 5000,
            delta: 0.05,
            sigma_noise: 1.0,
            condition: lev(1.2),
            b_bias: Some(0.0),
            e_term: 0.0,
        };
        let mis = theorem_misspecified(&inputs).unwrap();
        let cor = theorem_correct_model(&inputs).unwrap();
        assert_eq!(mis.approx, Some(0.0));
        assert_eq!(mis.noise, cor.noise);
        assert_relative_eq!(mis.delta_total, 0.15, epsilon = 1e-15);
        let unbounded = OlsBoundInputs { b_bias: None, ..inputs };
        assert!(matches!(theorem_misspecified(&unbounded), Err(Error::Inapplicable { .. })));
    }

    #[test]
    fn approx_second_moment_examples() {
        assert_relative_eq!(
            approx_second_moment_bound(lev(1.0), 2, 0.5, 1.0, 1.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(approx_second_moment_bound(sg(2.0), 2, 0.0, 1.0, 1.0).unwrap(), 0.0);
        let sub = approx_second_moment_bound(sg(1.0), 4, 0.3, 2.0, 1.0).unwrap();
        assert!(sub >= 4.0 * 0.3);
    }

    #[test]
    fn effective_dims_examples() {
        let (d1, d2) = effective_dims(&[1.0, 0.5, 0.25], 0.0).unwrap();
        assert_eq!((d1, d2), (3.0, 3.0));
        let (d1, d2) = effective_dims(&[1.0, 0.5, 0.25], 0.5).unwrap();
        assert_relative_eq!(d1, 1.5, epsilon = 1e-15);
        assert_relative_eq!(d2, 29.0 / 36.0, epsilon = 1e-15);
        let (d1, d2) = effective_dims(&[1.0, 0.5], 1e12).unwrap();
        assert!(d1 < 1e-11 && d2 < 1e-11);
    }

    #[test]
    fn ridge_k_examples() {
        let (rho, d1, delta) = (1.3, 2.5, 0.05);
        let q = ridge_q(rho, d1, delta);
        let n = (16.0 * q).ceil() as usize;
        let k = ridge_k(rho, d1, delta, n).unwrap();
        let nq = n as f64 / q;
        assert_relative_eq!(k, 1.0 / (1.0 - (2.0 / nq.sqrt() + 1.0 / nq)), epsilon = 1e-12);
        assert!(k <= 16.0 / 7.0 + 1e-12);
        // exactly at the boundary through a real-valued n
        assert_relative_eq!(1.0 / (1.0 - (0.5 + 1.0 / 16.0)), 16.0 / 7.0, epsilon = 1e-15);
        assert!(ridge_k(rho, d1, delta, n - 2).is_err());
        for rho in [1.0, 1.5, 3.0] {
            for d1 in [0.5, 2.0, 10.0, 50.0] {
                for delta in [0.001, 0.05, 0.12] {
                    let q = ridge_q(rho, d1, delta);
                    let n = (16.0 * q).ceil().max(1.0) as usize;
                    assert!(ridge_k(rho, d1, delta, n).unwrap() <= 4.0);
                }
            }
        }
    }

    fn ridge_inputs() -> RidgeBoundInputs {
        RidgeBoundInputs {
            spectrum: vec![1.0],
            beta_eigenbasis: DVector::from_element(1, 1.0),
            lambda: 1.0,
            n: 10_000,
            delta: 0.05,
            sigma_noise: 0.0,
            rho_lambda: 1.0,
            b_bias_lambda: 0.5,
            fourth_moment: 0.25,
            second_term_moment: None,
        }
    }

    #[test]
    fn ridge_examples() {
        let r = theorem_ridge(&ridge_inputs()).unwrap();
        assert_relative_eq!(r.first.unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(r.third, Some(0.0));
        assert_relative_eq!(r.delta_total, 0.2, epsilon = 1e-15);

        let zero = RidgeBoundInputs {
            beta_eigenbasis: DVector::zeros(1),
            b_bias_lambda: 0.0,
            ..ridge_inputs()
        };
        let r = theorem_ridge(&zero).unwrap();
        assert_eq!((r.first, r.second, r.third), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn ridge_preconditions_are_named() {
        let reason = |i: RidgeBoundInputs| match theorem_ridge(&i) {
            Err(Error::Inapplicable { reason, .. }) => reason,
            other => panic!("{other:?}"),
        };
        assert!(reason(RidgeBoundInputs { delta: 0.2, ..ridge_inputs() }).starts_with("delta"));
        assert!(reason(RidgeBoundInputs { lambda: 2.0, ..ridge_inputs() }).starts_with("lambda"));
        assert!(reason(RidgeBoundInputs { n: 3, ..ridge_inputs() }).starts_with("sample size"));
    }

    #[test]
    fn ridge_small_lambda_matches_ols_noise_term() {
        for d in [2usize, 5, 10] {
            for n in [2000usize, 20_000] {
                for delta in [0.01, 0.05, 0.1] {
                    let dd = d as f64;
                    let inputs = RidgeBoundInputs {
                        spectrum: vec![1.0; d],
                        beta_eigenbasis: DVector::zeros(d),
                        lambda: 1e-9,
                        n,
                        delta,
                        sigma_noise: 1.0,
                        rho_lambda: 1.0,
                        b_bias_lambda: 0.0,
                        fourth_moment: dd * dd + 2.0 * dd,
                        second_term_moment: None,
                    };
                    let Ok(r) = theorem_ridge(&inputs) else { continue };
                    let k = matrix_factor(lev(1.0), d, delta, n).unwrap();
                    let ols = noise_contribution(k, 1.0, d, delta, n).unwrap();
                    let ratio = r.third.unwrap() / ols;
                    assert!((0.125..=8.0).contains(&ratio), "d={d} n={n} δ={delta}: {ratio}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn factors_decrease_in_n(rho in 1.0f64..3.0, d in 1usize..20, delta in 0.001f64..0.12, step in 1usize..1000) {
            for c in [sg(rho), lev(rho)] {
                let n0 = sample_threshold(c, d, delta).unwrap().floor() as usize + 1;
                let a = matrix_factor(c, d, delta, n0).unwrap();
                let b = matrix_factor(c, d, delta, n0 + step).unwrap();
                prop_assert!(b < a && b > 1.0);
            }
            let d1 = d as f64 * 0.7;
            let n0 = (16.0 * ridge_q(rho, d1, delta)).ceil().max(1.0) as usize;
            let a = ridge_k(rho, d1, delta, n0).unwrap();
            let b = ridge_k(rho, d1, delta, n0 + step).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn d2_below_d1(spec in proptest::collection::vec(0.0f64..10.0, 1..12), lambda in 0.0f64..5.0) {
            let (d1, d2) = effective_dims(&spec, lambda).unwrap();
            prop_assert!(0.0 <= d2 && d2 <= d1 + 1e-15);
            prop_assert!(d1 <= spec.len() as f64 + 1e-12);
        }

        #[test]
        fn squared_form_is_the_stated_combination(
            e_term in 0.0f64..5.0, b in 0.0f64..3.0, sigma in 0.0f64..2.0, n in 200usize..100_000,
            beta in proptest::collection::vec(-2.0f64..2.0, 3), lambda in 0.01f64..0.9,
        ) {
            let inputs = OlsBoundInputs { d: 3, n, delta: 0.05, sigma_noise: sigma, condition: lev(1.0), b_bias: Some(b), e_term };
            if let Ok(r) = theorem_misspecified(&inputs) {
                prop_assert_eq!(r.total_squared_form, 2.0 * (r.approx.unwrap() + r.noise.unwrap()));
                prop_assert!(r.total <= r.total_squared_form * (1.0 + 1e-12));
            }
            let ridge = RidgeBoundInputs {
                spectrum: vec![1.0, 0.5, 0.25],
                beta_eigenbasis: DVector::from_vec(beta),
                lambda, n, delta: 0.05, sigma_noise: sigma, rho_lambda: 1.5, b_bias_lambda: b,
                fourth_moment: 20.0, second_term_moment: None,
            };
            if let Ok(r) = theorem_ridge(&ridge) {
                prop_assert_eq!(r.total_squared_form, 3.0 * (r.first.unwrap() + r.second.unwrap() + r.third.unwrap()));
            }
        }
    }
}
