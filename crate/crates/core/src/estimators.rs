//! OLS, ridge, the ridge conditional mean, and fixed-design references.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{delta_unit, nonnegative, Error, Result};
use crate::linalg::{self, Spectrum, SymMatrix};
use crate::population::{PopulationModel, Sample};

/// Relative normal-equation residual every fit is expected to meet.
pub const TOL_NORMAL_EQ: f64 = 1e-8;

/// A coefficient vector with the regularization and second moment that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    #[serde(skip)]
    pub second_moment: SymMatrix,
    pub n: usize,
    /// `‖(Σ̂ + λI)w − Ê[XY]‖ / max(‖Ê[XY]‖, tiny)`.
    pub residual: f64,
}

impl RegressionFit {
    pub fn residual_ok(&self) -> bool {
        self.residual <= TOL_NORMAL_EQ
    }
}

fn gate(spec: &Spectrum) -> Result<()> {
    let floor = linalg::TOL_PSD * spec.lambda_max().abs();
    if spec.lambda_min() <= floor {
        return Err(Error::Singular {
            eigenvalue: spec.lambda_min(),
            floor,
        });
    }
    Ok(())
}

/// Solves `(Σ̂ + λI) w = c` through the eigendecomposition of `Σ̂`.
/// At `λ = 0`, `Σ̂` must pass the invertibility gate.
pub fn solve_normal_equations(
    second_moment: &SymMatrix,
    cross: &DVector<f64>,
    lambda: f64,
    n: usize,
) -> Result<RegressionFit> {
    nonnegative("lambda", lambda)?;
    linalg::check_dim(second_moment.dim(), cross.len())?;
    let spec = second_moment.eig()?;
    if lambda == 0.0 {
        gate(&spec)?;
    }
    let coords = spec.vectors().tr_mul(cross);
    let scaled = DVector::from_fn(coords.len(), |j, _| coords[j] / (spec.values()[j] + lambda));
    let coefficients = spec.vectors() * scaled;
    let lhs = second_moment.as_matrix() * &coefficients + &coefficients * lambda;
    let scale = cross.norm().max(f64::MIN_POSITIVE);
    let residual = if cross.norm() == 0.0 {
        lhs.norm()
    } else {
        (lhs - cross).norm() / scale
    };
    if residual > TOL_NORMAL_EQ {
        log::warn!("normal-equation residual {residual:e} exceeds {TOL_NORMAL_EQ:e}");
    }
    Ok(RegressionFit {
        coefficients,
        lambda,
        second_moment: second_moment.clone(),
        n,
        residual,
    })
}

/// `β̂_ols = Σ̂⁻¹Ê[XY]`.
pub fn ols_fit(sample: &Sample) -> Result<RegressionFit> {
    solve_normal_equations(&sample.second_moment()?, &sample.cross_moment(), 0.0, sample.n())
}

/// `β̂λ = (Σ̂ + λI)⁻¹Ê[XY]`; `λ = 0` goes through the OLS gate.
pub fn ridge_fit(sample: &Sample, lambda: f64) -> Result<RegressionFit> {
    nonnegative("lambda", lambda)?;
    if lambda == 0.0 {
        return ols_fit(sample);
    }
    solve_normal_equations(&sample.second_moment()?, &sample.cross_moment(), lambda, sample.n())
}

/// `β̄λ = Σ̂λ⁻¹Σ̂β`, the mean of `β̂λ` given the covariates.
pub fn ridge_conditional_mean(
    covariates: &DMatrix<f64>,
    beta: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    nonnegative("lambda", lambda)?;
    let sh = linalg::empirical_second_moment(covariates)?;
    linalg::check_dim(sh.dim(), beta.len())?;
    let spec = sh.eig()?;
    if lambda == 0.0 {
        gate(&spec)?;
        return Ok(beta.clone());
    }
    let coords = spec.vectors().tr_mul(beta);
    let vals = spec.values();
    let shrunk = DVector::from_fn(coords.len(), |j, _| coords[j] * vals[j] / (vals[j] + lambda));
    Ok(spec.vectors() * shrunk)
}

/// `L(w) − L(β) = ‖w − β‖²_Σ`.
pub fn excess_loss(w: &DVector<f64>, model: &PopulationModel) -> Result<f64> {
    excess_loss_with(w, model.population_beta(), model.sigma())
}

/// `‖w − β‖²_Σ` for an explicit `(β, Σ)`.
pub fn excess_loss_with(w: &DVector<f64>, beta: &DVector<f64>, sigma: &SymMatrix) -> Result<f64> {
    linalg::check_dim(beta.len(), w.len())?;
    let norm = linalg::weighted_norm(&(w - beta), sigma)?;
    Ok(norm * norm)
}

fn fixed_dims(x: &DMatrix<f64>) -> Result<(usize, usize)> {
    let sigma = linalg::empirical_second_moment(x)?;
    gate(&sigma.eig()?)?;
    Ok((x.nrows(), x.ncols()))
}

/// Fixed-design OLS risk `E‖β̂ − β‖²_{Σ_fixed} = dσ²/n`.
pub fn fixed_design_risk(x: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    nonnegative("sigma2", sigma2)?;
    let (n, d) = fixed_dims(x)?;
    Ok(d as f64 * sigma2 / n as f64)
}

/// High-probability fixed-design bound
/// `σ²(d + 2√(d·log(1/δ)) + 2·log(1/δ))/n`.
pub fn fixed_design_highprob(x: &DMatrix<f64>, sigma_noise: f64, delta: f64) -> Result<f64> {
    let (n, d) = fixed_dims(x)?;
    fixed_design_highprob_dims(d, n, sigma_noise, delta)
}

pub(crate) fn fixed_design_highprob_dims(
    d: usize,
    n: usize,
    sigma_noise: f64,
    delta: f64,
) -> Result<f64> {
    nonnegative("sigma_noise", sigma_noise)?;
    delta_unit(delta)?;
    let l = (1.0 / delta).ln();
    let d = d as f64;
    Ok(sigma_noise * sigma_noise * (d + 2.0 * (d * l).sqrt() + 2.0 * l) / n as f64)
}

/// Fixed-design ridge risk split into `(bias term, variance term)`:
/// `Σⱼ βⱼ²λⱼ/(1+λⱼ/λ)²` and `σ²·Σⱼ(λⱼ/(λⱼ+λ))²/n`.
pub fn fixed_ridge_risk(
    spectrum: &[f64],
    beta_eigenbasis: &DVector<f64>,
    lambda: f64,
    sigma2: f64,
    n: usize,
) -> Result<(f64, f64)> {
    crate::error::open_interval("lambda", lambda, 0.0, f64::INFINITY, "(0, inf)")?;
    nonnegative("sigma2", sigma2)?;
    linalg::check_dim(spectrum.len(), beta_eigenbasis.len())?;
    if n == 0 {
        return Err(Error::Shape("n must be >= 1".into()));
    }
    let bias = spectrum
        .iter()
        .zip(beta_eigenbasis.iter())
        .map(|(&v, &b)| b * b * v / (1.0 + v / lambda).powi(2))
        .sum();
    let dim: f64 = spectrum.iter().map(|&v| (v / (v + lambda)).powi(2)).sum();
    Ok((bias, sigma2 * dim / n as f64))
}
