//! Rotate-then-subsample least squares.
//!
//! A random orthogonal `Θ` flattens the row leverage of `[A, b]`; rows of
//! the rotated system are then drawn uniformly and the small problem is
//! solved by OLS. Treating the rotated rows as an i.i.d. design with no
//! noise and the full-data residual as approximation error lets the
//! misspecified OLS bound certify the excess loss, with the leverage
//! constant supplied by [`rotation_leverage_bound`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{open_interval, Error, Result};
use crate::estimators::{solve_normal_equations, RegressionFit};
use crate::linalg;
use crate::risk::{self, BoundReport, Condition, OlsBoundInputs};
use crate::rng::Stream;

/// In-place Walsh–Hadamard transform in Sylvester order (unnormalized:
/// entries of `H` are ±1, `H·H = N·I`).
pub fn fwht_in_place(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("fwht length {n} is not a power of two")));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Dense Sylvester Hadamard matrix, entry `(i, j) = (−1)^{popcount(i & j)}`.
pub fn hadamard_dense(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("Hadamard order {n} is not a power of two")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationKind {
    HadamardRademacher,
    UniformOrthogonal,
}

/// An `N × N` orthogonal transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Rotation {
    /// `Θ = H·diag(signs)/√N`.
    Hadamard { signs: Vec<f64> },
    /// A dense orthonormal factor.
    Orthogonal { factor: DMatrix<f64> },
}

const TOL_ORTHOGONAL: f64 = 1e-10;

impl Rotation {
    pub fn hadamard(n: usize, stream: &mut Stream) -> Result<Self> {
        let signs = (0..n)
            .map(|_| if stream.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self::hadamard_with_signs(signs)
    }

    pub fn hadamard_with_signs(signs: Vec<f64>) -> Result<Self> {
        let n = signs.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Shape(format!(
                "Hadamard rotation needs a power-of-two row count, got {n}"
            )));
        }
        if signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::Shape("Hadamard signs must be ±1".into()));
        }
        Ok(Rotation::Hadamard { signs })
    }

    /// Haar-distributed orthogonal matrix: QR of a standard gaussian
    /// matrix with the diagonal of `R` made positive.
    pub fn uniform_orthogonal(n: usize, stream: &mut Stream) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("rotation needs at least one row".into()));
        }
        let g = DMatrix::from_fn(n, n, |_, _| stream.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Ok(Rotation::Orthogonal { factor: q })
    }

    pub fn from_orthogonal(factor: DMatrix<f64>) -> Result<Self> {
        if !factor.is_square() || factor.nrows() == 0 {
            return Err(Error::Shape("orthogonal factor must be square".into()));
        }
        let n = factor.nrows();
        let err = (&factor * factor.transpose() - DMatrix::<f64>::identity(n, n)).amax();
        if err > TOL_ORTHOGONAL {
            return Err(Error::Shape(format!("factor is not orthogonal (error {err:e})")));
        }
        Ok(Rotation::Orthogonal { factor })
    }

    pub fn kind(&self) -> RotationKind {
        match self {
            Rotation::Hadamard { .. } => RotationKind::HadamardRademacher,
            Rotation::Orthogonal { .. } => RotationKind::UniformOrthogonal,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Rotation::Hadamard { signs } => signs.len(),
            Rotation::Orthogonal { factor } => factor.nrows(),
        }
    }

    /// Subgaussian constant of a scaled row `√N·Θᵀeᵢ`.
    pub fn sigma_subgauss(&self) -> f64 {
        match self {
            Rotation::Hadamard { .. } => 1.0,
            Rotation::Orthogonal { factor } => {
                let n = factor.nrows() as f64;
                1.0 / (1.0 - 1.0 / (4.0 * n) - 1.0 / (360.0 * n.powi(3)))
            }
        }
    }

    /// `Θ·v`.
    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::check_dim(self.rows(), v.len())?;
        match self {
            Rotation::Hadamard { signs } => {
                let mut w: Vec<f64> = v.iter().zip(signs).map(|(a, s)| a * s).collect();
                fwht_in_place(&mut w)?;
                let scale = (signs.len() as f64).sqrt();
                Ok(DVector::from_iterator(w.len(), w.into_iter().map(|x| x / scale)))
            }
            Rotation::Orthogonal { factor } => Ok(factor * v),
        }
    }

    /// `Θ·A`, column by column.
    pub fn apply(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        linalg::check_dim(self.rows(), a.nrows())?;
        match self {
            Rotation::Hadamard { .. } => {
                let mut out = DMatrix::zeros(a.nrows(), a.ncols());
                for j in 0..a.ncols() {
                    out.set_column(j, &self.apply_vec(&a.column(j).into_owned())?);
                }
                Ok(out)
            }
            Rotation::Orthogonal { factor } => Ok(factor * a),
        }
    }

    /// Dense `Θ` (for checks).
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.apply(&DMatrix::identity(self.rows(), self.rows()))
    }
}

/// `(ΘA, Θb)`.
pub fn apply_rotation(
    rotation: &Rotation,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    linalg::check_dim(a.nrows(), b.len())?;
    Ok((rotation.apply(a)?, rotation.apply_vec(b)?))
}

/// Leverage certificate holding for all rows of `ΘA` with probability
/// `1 − δ′`: `σ·√(1 + 2√(log(N/δ′)/d) + 2·log(N/δ′)/d)`.
pub fn rotation_leverage_bound(sigma_subgauss: f64, d: usize, rows: usize, delta_prime: f64) -> Result<f64> {
    open_interval("delta_prime", delta_prime, 0.0, 1.0, "(0, 1)")?;
    if d == 0 || rows == 0 {
        return Err(Error::Shape("leverage bound needs d ≥ 1 and N ≥ 1".into()));
    }
    let l = (rows as f64 / delta_prime).ln().max(0.0);
    let df = d as f64;
    Ok(sigma_subgauss * (1.0 + 2.0 * (l / df).sqrt() + 2.0 * l / df).sqrt())
}

/// `max_i ‖Σ^{-1/2}xᵢ‖/√d` over the rows of `x`, with `Σ = XᵀX/N`.
pub fn max_row_leverage(x: &DMatrix<f64>) -> Result<f64> {
    let sigma = linalg::empirical_second_moment(x)?;
    let w = linalg::inv_sqrt(&sigma, None)?;
    let white = x * w.as_matrix();
    let d = x.ncols() as f64;
    Ok((0..white.nrows())
        .map(|i| white.row(i).norm())
        .fold(0.0, f64::max)
        / d.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchPlan {
    /// Subsample size.
    pub n: usize,
    /// Solve-failure probability.
    pub delta: f64,
    /// Rotation-failure probability.
    pub delta_prime: f64,
    /// Draw rows with replacement (the i.i.d. model); otherwise a uniform
    /// subset of distinct rows.
    pub with_replacement: bool,
}

impl SketchPlan {
    pub fn new(n: usize, delta: f64, delta_prime: f64) -> Result<Self> {
        let plan = SketchPlan {
            n,
            delta,
            delta_prime,
            with_replacement: true,
        };
        plan.validate(usize::MAX)?;
        Ok(plan)
    }

    fn validate(&self, rows: usize) -> Result<()> {
        open_interval("delta", self.delta, 0.0, 1.0, "(0, 1)")?;
        open_interval("delta_prime", self.delta_prime, 0.0, 1.0, "(0, 1)")?;
        if self.n == 0 {
            return Err(Error::Shape("subsample size must be at least 1".into()));
        }
        if !self.with_replacement && self.n > rows {
            return Err(Error::Shape(format!(
                "cannot draw {} distinct rows from {rows}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Losses, certificate and bound of one subsampled solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SketchReport {
    /// `L(ŵ) = ‖Aŵ − b‖²/N`.
    pub l_hat: f64,
    /// `L(β)` at the full least squares solution.
    pub l_beta: f64,
    /// `L(ŵ) − L(β)`.
    pub excess: f64,
    /// Squared sum-of-roots bound, `None` when inapplicable.
    pub bound: Option<f64>,
    /// Second-order part of `bound`.
    pub remainder: Option<f64>,
    pub bound_report: Option<BoundReport>,
    pub inapplicable: Option<String>,
    pub rho_certificate: f64,
    /// Sample size above which the matrix-error factor is finite.
    pub n_threshold: f64,
    pub empirical_leverage: f64,
    pub n: usize,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct SketchOutcome {
    pub fit: RegressionFit,
    pub full_solution: DVector<f64>,
    pub report: SketchReport,
}

/// Least squares over all rows of `(x, y)`.
pub fn full_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.nrows();
    let cross = x.tr_mul(y) / n as f64;
    Ok(solve_normal_equations(&linalg::empirical_second_moment(x)?, &cross, 0.0, n)?.coefficients)
}

fn mean_sq_residual(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (x * w - y).norm_squared() / x.nrows() as f64
}

/// Subsamples rows of the rotated system, solves by OLS and certifies the
/// excess loss over the full least squares solution.
pub fn subsample_solve(
    plan: &SketchPlan,
    rotation: &Rotation,
    rotated_a: &DMatrix<f64>,
    rotated_b: &DVector<f64>,
    stream: &mut Stream,
) -> Result<SketchOutcome> {
    let (rows, d) = rotated_a.shape();
    linalg::check_dim(rows, rotated_b.len())?;
    linalg::check_dim(rotation.rows(), rows)?;
    plan.validate(rows)?;

    let idx: Vec<usize> = if plan.with_replacement {
        (0..plan.n).map(|_| stream.random_range(0..rows)).collect()
    } else if plan.n == rows {
        (0..rows).collect()
    } else {
        rand::seq::index::sample(stream, rows, plan.n).into_vec()
    };
    let xs = rotated_a.select_rows(&idx);
    let ys = DVector::from_iterator(idx.len(), idx.iter().map(|&i| rotated_b[i]));
    let cross = xs.tr_mul(&ys) / plan.n as f64;
    let fit = solve_normal_equations(&linalg::empirical_second_moment(&xs)?, &cross, 0.0, plan.n)?;

    let beta = full_solve(rotated_a, rotated_b)?;
    let l_beta = mean_sq_residual(rotated_a, rotated_b, &beta);
    let l_hat = mean_sq_residual(rotated_a, rotated_b, &fit.coefficients);

    let rho = rotation_leverage_bound(rotation.sigma_subgauss(), d, rows, plan.delta_prime)?;
    let condition = Condition::BoundedLeverage { rho };
    let residual = rotated_b - rotated_a * &beta;
    let inputs = OlsBoundInputs {
        d,
        n: plan.n,
        delta: plan.delta,
        sigma_noise: 0.0,
        condition,
        b_bias: Some(residual.amax()),
        e_term: rho * rho * d as f64 * l_beta,
    };
    let n_threshold = risk::sample_threshold(condition, d, plan.delta)?;
    let (bound, remainder, bound_report, inapplicable) = match risk::theorem_misspecified(&inputs) {
        Ok(r) => (Some(r.total), r.approx_remainder, Some(r), None),
        Err(e @ Error::Inapplicable { .. }) => (None, None, None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let report = SketchReport {
        l_hat,
        l_beta,
        excess: l_hat - l_beta,
        bound,
        remainder,
        bound_report,
        inapplicable,
        rho_certificate: rho,
        n_threshold,
        empirical_leverage: max_row_leverage(rotated_a)?,
        n: plan.n,
        rows,
    };
    Ok(SketchOutcome {
        fit,
        full_solution: beta,
        report,
    })
}

/// Rotates `(a, b)` with a fresh rotation, then subsamples and solves.
pub fn sketch_solve(
    plan: &SketchPlan,
    kind: RotationKind,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    stream: &mut Stream,
) -> Result<SketchOutcome> {
    let mut rot_stream = stream.derive("rotation", 0);
    let rotation = match kind {
        RotationKind::HadamardRademacher => Rotation::hadamard(a.nrows(), &mut rot_stream)?,
        RotationKind::UniformOrthogonal => Rotation::uniform_orthogonal(a.nrows(), &mut rot_stream)?,
    };
    let (ra, rb) = apply_rotation(&rotation, a, b)?;
    subsample_solve(plan, &rotation, &ra, &rb, &mut stream.derive("subsample", 0))
}
