//! Symmetric-matrix primitives shared by every other module.
//!
//! All spectral work goes through [`sym_eig`]; inverse roots, inverses and
//! square roots are spectral maps on its output, so the spectra used by the
//! bounds and the matrices used by the estimators always agree.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{nonnegative, Error, Result};

/// Relative singularity / PSD tolerance (relative to `λ_max`).
pub const TOL_PSD: f64 = 1e-10;

/// Relative asymmetry accepted (and then symmetrized away) on construction.
const TOL_SYMMETRY: f64 = 1e-10;

/// A dense real symmetric matrix, stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, averaging it with its transpose.
    ///
    /// Fails if the matrix is not square or its asymmetry exceeds
    /// `1e-10 · max|a_ij|`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let mut asym: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > TOL_SYMMETRY * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(Self::symmetrize(m))
    }

    /// Averages `m` with its transpose without checking the asymmetry.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds from nested rows, e.g. parsed JSON.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(&self.0 * x)
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(x.dot(&(&self.0 * x)))
    }

    /// `T M T` for symmetric `T`, which is again symmetric.
    pub fn congruence(&self, t: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim(), t.dim())?;
        Ok(Self::symmetrize(&t.0 * &self.0 * &t.0))
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 - &other.0))
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    pub fn eig(&self) -> Result<Spectrum> {
        sym_eig(self)
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(sym_eig(self)?.spectral_norm())
    }

    /// Row-major CSV with a `# symmatrix d=<dim>` header line.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = format!("# symmatrix d={d}\n");
        for i in 0..d {
            for j in 0..d {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.0[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Shape("empty matrix CSV".into()))?;
        let d: usize = header
            .trim()
            .strip_prefix("# symmatrix d=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Shape(format!("bad symmatrix header: {header:?}")))?;
        let mut rows = Vec::with_capacity(d);
        for line in lines {
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::Shape(format!("bad matrix entry: {e}")))?);
        }
        if rows.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rows.len(),
            });
        }
        Self::from_rows(&rows)
    }
}

/// Eigenvalues sorted nonincreasing with matching orthonormal eigenvectors
/// (as columns).
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.get(0).copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.values.iter().next_back().copied().unwrap_or(0.0)
    }

    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let fd = DMatrix::from_diagonal(&self.values.map(f));
        SymMatrix::symmetrize(&self.vectors * fd * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|v| v)
    }

    /// Coordinates of `x` in the eigenbasis, `Vᵀx`.
    pub fn to_eigenbasis(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.vectors.tr_mul(x))
    }

    /// Eigenvalues with tolerance-level negatives clamped to zero.
    ///
    /// Errors if any eigenvalue is below `-TOL_PSD · λ_max`.
    pub fn psd_values(&self) -> Result<DVector<f64>> {
        let floor = -TOL_PSD * self.lambda_max().abs().max(f64::MIN_POSITIVE);
        let min = self.lambda_min();
        if min < floor {
            return Err(Error::PsdViolation { value: min });
        }
        Ok(self.values.map(|v| v.max(0.0)))
    }

    fn with_values(&self, values: DVector<f64>) -> Spectrum {
        Spectrum {
            values,
            vectors: self.vectors.clone(),
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing.
pub fn sym_eig(m: &SymMatrix) -> Result<Spectrum> {
    let d = m.dim();
    let max_iter = 1000 * d.max(1);
    let eig = SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, max_iter)
        .ok_or(Error::NumericalFailure { iterations: max_iter })?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Spectrum { values, vectors })
}

/// `‖x‖_M = √(xᵀ M x)` for PSD `M`.
pub fn weighted_norm(x: &DVector<f64>, m: &SymMatrix) -> Result<f64> {
    let q = m.quad_form(x)?;
    let scale = m.frobenius_norm() * x.norm_squared();
    if q < -TOL_PSD * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::PsdViolation { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

fn positive_floor(spec: &Spectrum, floor: Option<f64>) -> Result<f64> {
    let floor = floor.unwrap_or(TOL_PSD * spec.lambda_max().abs());
    nonnegative("floor", floor)?;
    let min = spec.lambda_min();
    if min <= floor {
        return Err(Error::Singular {
            eigenvalue: min,
            floor,
        });
    }
    Ok(floor)
}

/// `M^{-1/2}` for positive definite `M`; `floor` defaults to `TOL_PSD · λ_max`.
pub fn inv_sqrt(m: &SymMatrix, floor: Option<f64>) -> Result<SymMatrix> {
    let spec = sym_eig(m)?;
    positive_floor(&spec, floor)?;
    Ok(spec.map(|v| 1.0 / v.sqrt()))
}

/// `M^{-1}` through the same invertibility gate as [`inv_sqrt`].
pub fn inverse_pd(m: &SymMatrix, floor: Option<f64>) -> Result<SymMatrix> {
    let spec = sym_eig(m)?;
    positive_floor(&spec, floor)?;
    Ok(spec.map(|v| 1.0 / v))
}

/// `M^{1/2}` for PSD `M` (tolerance-level negative eigenvalues clamped).
pub fn sqrt_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let spec = sym_eig(m)?;
    let vals = spec.psd_values()?;
    Ok(spec.with_values(vals).map(f64::sqrt))
}

/// `(1/n) Xᵀ X` for an `n × d` sample matrix.
pub fn empirical_second_moment(x: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Shape("empirical second moment needs n >= 1".into()));
    }
    Ok(SymMatrix::symmetrize(x.tr_mul(x) / n as f64))
}

/// `M + λI`.
pub fn regularize(m: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    nonnegative("lambda", lambda)?;
    let mut out = m.0.clone();
    for i in 0..m.dim() {
        out[(i, i)] += lambda;
    }
    Ok(SymMatrix(out))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
