//! Per-sample checks of the exact error decompositions and matrix-error
//! inequalities behind the risk bounds.
//!
//! Every check records its left side, right side and slack `rhs − lhs`, so a
//! failure can be inspected rather than just flagged.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{nonnegative, open_interval, Error, Result};
use crate::estimators::{ols_fit, ridge_conditional_mean, ridge_fit};
use crate::linalg::{self, SymMatrix};
use crate::population::{PopulationModel, Sample};
use crate::risk::effective_dims;

/// Relative tolerance for identities.
pub const TOL_EQUALITY: f64 = 1e-9;
/// Relative tolerance for inequalities.
pub const TOL_INEQUALITY: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Equality,
    AtMost,
}

/// One named relation `lhs = rhs` or `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionCheck {
    pub name: &'static str,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub components: Vec<(&'static str, f64)>,
    /// `rhs − lhs`.
    pub slack: f64,
    pub pass: bool,
}

impl DecompositionCheck {
    pub fn new(
        name: &'static str,
        relation: Relation,
        lhs: f64,
        rhs: f64,
        components: Vec<(&'static str, f64)>,
    ) -> Self {
        Self::with_floor(name, relation, lhs, rhs, components, 0.0)
    }

    /// As [`DecompositionCheck::new`], with the tolerance scale at least
    /// `floor` (for quantities that vanish up to roundoff).
    pub fn with_floor(
        name: &'static str,
        relation: Relation,
        lhs: f64,
        rhs: f64,
        components: Vec<(&'static str, f64)>,
        floor: f64,
    ) -> Self {
        let slack = rhs - lhs;
        let scale = lhs.abs().max(rhs.abs()).max(floor);
        let pass = match relation {
            Relation::Equality => slack.abs() <= TOL_EQUALITY * scale,
            Relation::AtMost => slack >= -TOL_INEQUALITY * scale,
        };
        DecompositionCheck {
            name,
            relation,
            lhs,
            rhs,
            components,
            slack,
            pass,
        }
    }

    /// `|rhs − lhs| / max(|lhs|, |rhs|)` (0 when both vanish).
    pub fn relative_gap(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.slack.abs() / scale
        }
    }
}

/// A set of checks evaluated on one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub checks: Vec<DecompositionCheck>,
}

impl DecompositionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&DecompositionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Smallest slack over the inequality checks (`+∞` if there are none).
    pub fn min_inequality_slack(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.relation == Relation::AtMost)
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Δλ = Σλ^{-1/2}(Σ̂ − Σ)Σλ^{-1/2}` with its spectral and Frobenius norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLambda {
    pub matrix: SymMatrix,
    pub spectral: f64,
    pub frobenius: f64,
}

pub fn delta_lambda(sigma: &SymMatrix, sigma_hat: &SymMatrix, lambda: f64) -> Result<DeltaLambda> {
    nonnegative("lambda", lambda)?;
    linalg::check_dim(sigma.dim(), sigma_hat.dim())?;
    let w = linalg::inv_sqrt(&linalg::regularize(sigma, lambda)?, None)?;
    let matrix = sigma_hat.sub(sigma)?.congruence(&w)?;
    Ok(DeltaLambda {
        spectral: matrix.spectral_norm()?,
        frobenius: matrix.frobenius_norm(),
        matrix,
    })
}

fn recorded(sample: &Sample) -> Result<(&DVector<f64>, &DVector<f64>)> {
    match (&sample.noise, &sample.bias) {
        (Some(e), Some(b)) => Ok((e, b)),
        _ => Err(Error::Unavailable("sample lacks recorded noise and bias")),
    }
}

fn sigma_norm(v: &DVector<f64>, sigma: &SymMatrix) -> Result<f64> {
    linalg::weighted_norm(v, sigma)
}

/// OLS error decomposition on one sample.
///
/// Checks `‖β̂ − β‖²_Σ = ‖Ê[Σ̂⁻¹X(bias + noise)]‖²_Σ`, the triangle and
/// `2(a² + b²)` forms, and the factorization through
/// `‖Σ^{1/2}Σ̂⁻¹Σ^{1/2}‖` for the noise part. For bias-free models the
/// identity is checked against the noise part alone.
pub fn check_ols_decomposition(sample: &Sample, model: &PopulationModel) -> Result<DecompositionReport> {
    let (noise, bias) = recorded(sample)?;
    let sigma = model.sigma();
    let n = sample.n() as f64;
    let fit = ols_fit(sample)?;
    let gap = &fit.coefficients - model.population_beta();
    let excess = sigma_norm(&gap, sigma)?.powi(2);

    let sh_inv = linalg::inverse_pd(&fit.second_moment, None)?;
    let g_noise = sample.x.tr_mul(noise) / n;
    let g_bias = sample.x.tr_mul(bias) / n;
    let noise_part = sh_inv.mul_vec(&g_noise)?;
    let approx_part = sh_inv.mul_vec(&g_bias)?;
    let a = sigma_norm(&approx_part, sigma)?;
    let b = sigma_norm(&noise_part, sigma)?;

    let mut checks = Vec::new();
    if model.bias().is_zero() {
        let floor = f64::EPSILON * sigma.quad_form(model.population_beta())?;
        checks.push(DecompositionCheck::with_floor(
            "identity",
            Relation::Equality,
            excess,
            b * b,
            vec![("noise", b * b)],
            floor,
        ));
    } else {
        let whole = sigma_norm(&(&approx_part + &noise_part), sigma)?.powi(2);
        checks.push(DecompositionCheck::new(
            "identity",
            Relation::Equality,
            excess,
            whole,
            vec![("approx", a * a), ("noise", b * b)],
        ));
        checks.push(DecompositionCheck::new(
            "triangle",
            Relation::AtMost,
            excess.sqrt(),
            a + b,
            vec![("approx", a), ("noise", b)],
        ));
        checks.push(DecompositionCheck::new(
            "squared",
            Relation::AtMost,
            excess,
            2.0 * (a * a + b * b),
            vec![("approx", a * a), ("noise", b * b)],
        ));
    }

    // ‖Σ̂⁻¹g‖²_Σ ≤ ‖Σ^{1/2}Σ̂⁻¹Σ^{1/2}‖·‖Σ̂^{-1/2}g‖²
    let root = linalg::sqrt_psd(sigma)?;
    let factor = sh_inv.congruence(&root)?.spectral_norm()?;
    let sh_isqrt = linalg::inv_sqrt(&fit.second_moment, None)?;
    let mut parts = vec![("factorized-noise", &g_noise, b * b)];
    if !model.bias().is_zero() {
        parts.push(("factorized-approx", &g_bias, a * a));
    }
    for (name, g, part) in parts {
        let w = sh_isqrt.mul_vec(g)?.norm_squared();
        checks.push(DecompositionCheck::new(
            name,
            Relation::AtMost,
            part,
            factor * w,
            vec![("matrix-error", factor), ("whitened", w)],
        ));
    }
    Ok(DecompositionReport { checks })
}

/// The four norms of the ridge decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgeNorms {
    /// `‖β̂λ − β‖_Σ`.
    pub total: f64,
    /// `‖βλ − β‖_Σ`.
    pub first: f64,
    /// `‖β̄λ − βλ‖_Σ`.
    pub second: f64,
    /// `‖β̄λ − β̂λ‖_Σ`.
    pub third: f64,
}

pub fn ridge_norms(sample: &Sample, model: &PopulationModel, lambda: f64) -> Result<RidgeNorms> {
    open_interval("lambda", lambda, 0.0, f64::INFINITY, "(0, inf)")?;
    let sigma = model.sigma();
    let beta = model.population_beta();
    let target = model.ridge_target(lambda)?;
    let mean = ridge_conditional_mean(&sample.x, beta, lambda)?;
    let fit = ridge_fit(sample, lambda)?.coefficients;
    Ok(RidgeNorms {
        total: sigma_norm(&(&fit - beta), sigma)?,
        first: sigma_norm(&(&target - beta), sigma)?,
        second: sigma_norm(&(&mean - &target), sigma)?,
        third: sigma_norm(&(&mean - &fit), sigma)?,
    })
}

/// Ridge decomposition: triangle and `3(a² + b² + c²)` forms.
pub fn check_ridge_decomposition(
    sample: &Sample,
    model: &PopulationModel,
    lambda: f64,
) -> Result<DecompositionReport> {
    let r = ridge_norms(sample, model, lambda)?;
    let comps = vec![("first", r.first), ("second", r.second), ("third", r.third)];
    let mut checks = vec![
        DecompositionCheck::new(
            "triangle",
            Relation::AtMost,
            r.total,
            r.first + r.second + r.third,
            comps.clone(),
        ),
        DecompositionCheck::new(
            "squared",
            Relation::AtMost,
            r.total * r.total,
            3.0 * (r.first.powi(2) + r.second.powi(2) + r.third.powi(2)),
            comps,
        ),
    ];
    if let (Some(noise), true) = (&sample.noise, model.bias().is_zero()) {
        // β̂λ − β̄λ = Σ̂λ⁻¹Ê[X·noise]
        let sh = linalg::regularize(&sample.second_moment()?, lambda)?;
        let v = linalg::inverse_pd(&sh, None)?.mul_vec(&(sample.x.tr_mul(noise) / sample.n() as f64))?;
        let direct = sigma_norm(&v, model.sigma())?;
        checks.push(DecompositionCheck::new(
            "third-identity",
            Relation::Equality,
            r.third * r.third,
            direct * direct,
            vec![],
        ));
    }
    Ok(DecompositionReport { checks })
}

/// `λ_max(Σλ^{1/2}Σ̂λ⁻¹Σλ^{1/2}) ≤ 1/(1 − ‖Δλ‖)`, requiring `‖Δλ‖ < 1`.
pub fn check_weyl(sigma: &SymMatrix, sigma_hat: &SymMatrix, lambda: f64) -> Result<DecompositionCheck> {
    let delta = delta_lambda(sigma, sigma_hat, lambda)?;
    if delta.spectral >= 1.0 {
        return Err(Error::Inapplicable {
            bound: "weyl",
            reason: format!("‖Δλ‖ = {} is not below 1", delta.spectral),
            threshold: 1.0,
        });
    }
    let root = linalg::sqrt_psd(&linalg::regularize(sigma, lambda)?)?;
    let inv = linalg::inverse_pd(&linalg::regularize(sigma_hat, lambda)?, None)?;
    let lhs = inv.congruence(&root)?.eig()?.lambda_max();
    Ok(DecompositionCheck::new(
        "weyl",
        Relation::AtMost,
        lhs,
        1.0 / (1.0 - delta.spectral),
        vec![("delta-spectral", delta.spectral)],
    ))
}

/// Realized matrix error: `‖Σ^{1/2}Σ̂⁻¹Σ^{1/2}‖` at `λ = 0`, otherwise
/// `λ_max(Σλ^{1/2}Σ̂λ⁻¹Σλ^{1/2})`. A singular `Σ̂` at `λ = 0` gives `+∞`.
pub fn realized_matrix_error(sigma: &SymMatrix, sigma_hat: &SymMatrix, lambda: f64) -> Result<f64> {
    nonnegative("lambda", lambda)?;
    linalg::check_dim(sigma.dim(), sigma_hat.dim())?;
    let root = linalg::sqrt_psd(&linalg::regularize(sigma, lambda)?)?;
    let inv = match linalg::inverse_pd(&linalg::regularize(sigma_hat, lambda)?, None) {
        Ok(inv) => inv,
        Err(Error::Singular { .. }) => return Ok(f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(inv.congruence(&root)?.eig()?.lambda_max())
}

/// `M = (1/n²)AᵀΣ̂λ⁻¹ΣΣ̂λ⁻¹A` (columns of `A` are the covariates) with its
/// trace, spectral norm and the checks against its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdTermMatrix {
    pub matrix: SymMatrix,
    pub trace: f64,
    pub spectral_norm: f64,
    /// Checks (empty when `‖Δλ‖ ≥ 1`): `trace` bounds the trace with the
    /// proven correction `√d₂·‖Δλ‖_F`, `trace-stated` with `√(d₂‖Δλ‖_F)`,
    /// and `spectral` bounds `‖M‖` by `1/(n(1 − ‖Δλ‖))`.
    pub checks: Vec<DecompositionCheck>,
}

impl ThirdTermMatrix {
    pub fn check(&self, name: &str) -> Option<&DecompositionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn third_term_matrix(covariates: &DMatrix<f64>, sigma: &SymMatrix, lambda: f64) -> Result<ThirdTermMatrix> {
    open_interval("lambda", lambda, 0.0, f64::INFINITY, "(0, inf)")?;
    let sh = linalg::empirical_second_moment(covariates)?;
    linalg::check_dim(sigma.dim(), sh.dim())?;
    let n = covariates.nrows() as f64;
    let inv = linalg::inverse_pd(&linalg::regularize(&sh, lambda)?, None)?;
    let core = sigma.congruence(&inv)?;
    let m = covariates * core.as_matrix() * covariates.transpose() / (n * n);
    let matrix = SymMatrix::symmetrize(m);
    let trace = matrix.trace();
    let spectral_norm = matrix.eig()?.lambda_max().max(0.0);

    let mut checks = Vec::new();
    let delta = delta_lambda(sigma, &sh, lambda)?;
    if delta.spectral < 1.0 {
        let spec = sigma.eig()?.psd_values()?;
        let (_, d2) = effective_dims(spec.as_slice(), lambda)?;
        let shrink = 1.0 - delta.spectral;
        let proven = (d2 + d2.sqrt() * delta.frobenius) / (n * shrink * shrink);
        let stated = (d2 + (d2 * delta.frobenius).sqrt()) / (n * shrink * shrink);
        let comps = vec![
            ("d2", d2),
            ("delta-spectral", delta.spectral),
            ("delta-frobenius", delta.frobenius),
        ];
        checks.push(DecompositionCheck::new("trace", Relation::AtMost, trace, proven, comps.clone()));
        checks.push(DecompositionCheck::new("trace-stated", Relation::AtMost, trace, stated, comps.clone()));
        checks.push(DecompositionCheck::new(
            "spectral",
            Relation::AtMost,
            spectral_norm,
            1.0 / (n * shrink),
            comps,
        ));
    }
    Ok(ThirdTermMatrix {
        matrix,
        trace,
        spectral_norm,
        checks,
    })
}

/// Leverage `‖Σλ^{-1/2}x‖/√d₁,λ` over a point set at one `λ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeverageStats {
    pub lambda: f64,
    pub d1: f64,
    pub max: f64,
    pub mean: f64,
    /// Upper edges of equal-width bins on `[0, max]`.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

const LEVERAGE_BINS: usize = 10;

/// Leverage statistics of the rows of `points` at each `λ` of the grid.
pub fn leverage_profile(points: &DMatrix<f64>, sigma: &SymMatrix, lambdas: &[f64]) -> Result<Vec<LeverageStats>> {
    linalg::check_dim(sigma.dim(), points.ncols())?;
    if points.nrows() == 0 {
        return Err(Error::Shape("leverage profile needs at least one point".into()));
    }
    let spec = sigma.eig()?;
    lambdas
        .iter()
        .map(|&lambda| {
            nonnegative("lambda", lambda)?;
            let w = if lambda == 0.0 {
                linalg::inv_sqrt(sigma, None)?
            } else {
                spec.map(|v| 1.0 / (v + lambda).sqrt())
            };
            let (d1, _) = effective_dims(spec.psd_values()?.as_slice(), lambda)?;
            let lev: Vec<f64> = (0..points.nrows())
                .map(|i| (w.as_matrix() * points.row(i).transpose()).norm() / d1.sqrt())
                .collect();
            let max = lev.iter().copied().fold(0.0, f64::max);
            let mean = lev.iter().sum::<f64>() / lev.len() as f64;
            let bin_edges: Vec<f64> = (1..=LEVERAGE_BINS)
                .map(|k| max * k as f64 / LEVERAGE_BINS as f64)
                .collect();
            let mut counts = vec![0; LEVERAGE_BINS];
            for &l in &lev {
                let k = if max > 0.0 {
                    ((l / max * LEVERAGE_BINS as f64).ceil() as usize).clamp(1, LEVERAGE_BINS) - 1
                } else {
                    0
                };
                counts[k] += 1;
            }
            Ok(LeverageStats {
                lambda,
                d1,
                max,
                mean,
                bin_edges,
                counts,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{DesignSpec, NoiseSpec, RawBias};
    use crate::rng::Stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn gaussian_model(d: usize, sigma: f64) -> PopulationModel {
        let cov = SymMatrix::from_diagonal(&(0..d).map(|j| 1.0 / (1.0 + j as f64)).collect::<Vec<_>>());
        PopulationModel::new(
            DesignSpec::gaussian(cov).unwrap(),
            DVector::from_fn(d, |i, _| 1.0 - 0.3 * i as f64),
            if sigma > 0.0 { NoiseSpec::Gaussian { sigma } } else { NoiseSpec::Zero },
            RawBias::Zero,
        )
        .unwrap()
    }

    fn three_atom_model() -> PopulationModel {
        let atoms = vec![dv(&[1.0, 0.5]), dv(&[-0.5, 1.0]), dv(&[0.2, -1.5])];
        PopulationModel::new(
            DesignSpec::discrete(atoms, vec![0.5, 0.3, 0.2]).unwrap(),
            dv(&[1.0, -0.5]),
            NoiseSpec::Gaussian { sigma: 0.5 },
            RawBias::QuadraticForm(SymMatrix::identity(2)),
        )
        .unwrap()
    }

    #[test]
    fn delta_lambda_examples() {
        let i2 = SymMatrix::identity(2);
        let z = delta_lambda(&i2, &i2, 0.3).unwrap();
        assert_eq!((z.spectral, z.frobenius), (0.0, 0.0));
        let sh = SymMatrix::from_diagonal(&[0.5, 1.5]);
        let d = delta_lambda(&i2, &sh, 1.0).unwrap();
        assert_relative_eq!(d.matrix.as_matrix(), SymMatrix::from_diagonal(&[-0.25, 0.25]).as_matrix(), epsilon = 1e-15);
        assert_relative_eq!(d.spectral, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn delta_frobenius_matches_entry_sum() {
        let m = gaussian_model(3, 1.0);
        let s = m.sample(20, &mut Stream::new(2, "diag", 0)).unwrap();
        let d = delta_lambda(m.sigma(), &s.second_moment().unwrap(), 0.4).unwrap();
        let sum: f64 = d.matrix.as_matrix().iter().map(|v| v * v).sum();
        assert_relative_eq!(d.frobenius.powi(2), sum, max_relative = 1e-12);
    }

    #[test]
    fn ols_identity_zero_noise() {
        let m = gaussian_model(3, 0.0);
        let s = m.sample(10, &mut Stream::new(1, "diag", 0)).unwrap();
        let r = check_ols_decomposition(&s, &m).unwrap();
        let id = r.get("identity").unwrap();
        assert!(id.lhs < 1e-20 && id.rhs < 1e-20);
        assert!(r.all_pass());
    }

    #[test]
    fn ols_identity_gaussian() {
        let m = gaussian_model(2, 1.0);
        let s = m.sample(50, &mut Stream::new(4, "diag", 0)).unwrap();
        let r = check_ols_decomposition(&s, &m).unwrap();
        assert!(r.get("identity").unwrap().relative_gap() <= 1e-9);
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn ols_misspecified_triangle() {
        let m = three_atom_model();
        let s = m.sample(200, &mut Stream::new(5, "diag", 0)).unwrap();
        let r = check_ols_decomposition(&s, &m).unwrap();
        assert!(r.get("triangle").unwrap().slack >= 0.0);
        assert!(r.get("squared").unwrap().slack >= 0.0);
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn ridge_third_norm_vanishes_without_noise() {
        let m = gaussian_model(3, 0.0);
        let s = m.sample(30, &mut Stream::new(6, "diag", 0)).unwrap();
        let r = ridge_norms(&s, &m, 0.5).unwrap();
        assert!(r.third <= 1e-12 * r.total.max(1.0));
    }

    #[test]
    fn ridge_small_lambda_first_two_vanish() {
        let m = gaussian_model(3, 1.0);
        let s = m.sample(40, &mut Stream::new(7, "diag", 0)).unwrap();
        let r = ridge_norms(&s, &m, 1e-10).unwrap();
        assert!(r.first < 1e-8 && r.second < 1e-8, "{r:?}");
    }

    #[test]
    fn ridge_decomposition_on_discrete_model() {
        let atoms = (0..3)
            .flat_map(|j| [1.0, -1.0].map(|s| {
                let mut v = DVector::zeros(3);
                v[j] = s * (1.0 + j as f64);
                v
            }))
            .collect();
        let m = PopulationModel::new(
            DesignSpec::uniform(atoms).unwrap(),
            dv(&[1.0, 2.0, -1.0]),
            NoiseSpec::ScaledRademacher { magnitude: 1.0 },
            RawBias::Zero,
        )
        .unwrap();
        let s = m.sample(500, &mut Stream::new(8, "diag", 0)).unwrap();
        let r = check_ridge_decomposition(&s, &m, 0.2).unwrap();
        assert!(r.get("triangle").unwrap().slack >= 0.0);
        assert!(r.get("squared").unwrap().slack >= 0.0);
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn weyl_examples() {
        let i2 = SymMatrix::identity(2);
        let c = check_weyl(&i2, &i2, 0.5).unwrap();
        assert_relative_eq!(c.lhs, 1.0, epsilon = 1e-14);
        assert!(c.pass);
        let c = check_weyl(&i2, &SymMatrix::from_diagonal(&[0.5, 1.5]), 1.0).unwrap();
        assert_relative_eq!(c.lhs, 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(c.rhs, 4.0 / 3.0, epsilon = 1e-14);
        assert!(c.pass);
        assert!(check_weyl(&i2, &SymMatrix::from_diagonal(&[0.0, 3.5]), 0.1).is_err());
    }

    #[test]
    fn third_term_trace_at_population_moment() {
        // rows √2·eⱼ (j = 1, 2) give Σ̂ = Σ = I; Δλ = 0
        let x = DMatrix::from_row_slice(2, 2, &[2f64.sqrt(), 0.0, 0.0, 2f64.sqrt()]);
        let sigma = SymMatrix::identity(2);
        let lambda = 0.5;
        let t = third_term_matrix(&x, &sigma, lambda).unwrap();
        let d2 = 2.0 * (1.0f64 / 1.5).powi(2);
        assert_relative_eq!(t.trace, d2 / 2.0, max_relative = 1e-12);
        assert!(t.checks.iter().all(|c| c.pass));
    }

    #[test]
    fn third_term_matrix_on_random_sample() {
        let m = gaussian_model(3, 1.0);
        let s = m.sample(100, &mut Stream::new(9, "diag", 0)).unwrap();
        let t = third_term_matrix(&s.x, m.sigma(), 0.3).unwrap();
        // d×d form: (1/n)·tr(Σ̂λ⁻¹Σ̂Σ̂λ⁻¹Σ)
        let sh = s.second_moment().unwrap();
        let inv = linalg::inverse_pd(&linalg::regularize(&sh, 0.3).unwrap(), None).unwrap();
        let small = inv.as_matrix() * sh.as_matrix() * inv.as_matrix() * m.sigma().as_matrix();
        assert_relative_eq!(t.trace, small.trace() / 100.0, max_relative = 1e-10);
        assert_eq!(t.checks.len(), 3);
        assert!(t.check("trace").unwrap().pass && t.check("spectral").unwrap().pass);
    }

    #[test]
    fn leverage_profile_examples() {
        let d = 3;
        let pts = DMatrix::identity(d, d) * (d as f64).sqrt();
        let prof = leverage_profile(&pts, &SymMatrix::identity(d), &[0.0]).unwrap();
        assert_relative_eq!(prof[0].max, 1.0, epsilon = 1e-12);
        assert_relative_eq!(prof[0].mean, 1.0, epsilon = 1e-12);

        let m = three_atom_model();
        let c = m.model_constants(&[0.0]).unwrap();
        let crate::population::DesignSpec::Discrete { atoms, .. } = m.design() else { unreachable!() };
        let pts = DMatrix::from_fn(atoms.len(), 2, |i, j| atoms[i][j]);
        let prof = leverage_profile(&pts, m.sigma(), &[0.0, 0.5]).unwrap();
        assert_relative_eq!(prof[0].max, c.rho_2cov().unwrap(), max_relative = 1e-12);
        assert_eq!(prof[1].counts.iter().sum::<usize>(), 3);

        let g = gaussian_model(5, 1.0);
        let s = g.sample(1000, &mut Stream::new(3, "lev", 0)).unwrap();
        let prof = leverage_profile(&s.x, g.sigma(), &[0.0]).unwrap();
        assert!(prof[0].max.is_finite() && prof[0].max > 1.0);
    }

    proptest! {
        #[test]
        fn factorized_chain_holds(seed in 0u64..500) {
            let m = gaussian_model(3, 1.0);
            let s = m.sample(12, &mut Stream::new(seed, "chain", 0)).unwrap();
            let r = check_ols_decomposition(&s, &m).unwrap();
            prop_assert!(r.get("factorized-noise").unwrap().pass);
            prop_assert!(r.get("identity").unwrap().pass);
        }

        #[test]
        fn weyl_holds_under_perturbation(seed in 0u64..500, scale in 0.0f64..0.3) {
            let m = gaussian_model(3, 1.0);
            let s = m.sample(40, &mut Stream::new(seed, "weyl", 0)).unwrap();
            let sh = s.second_moment().unwrap().scale(1.0 - scale).add(&m.sigma().scale(scale)).unwrap();
            if let Ok(c) = check_weyl(m.sigma(), &sh, 0.2) {
                prop_assert!(c.pass, "{:?}", c);
            }
        }
    }
}
