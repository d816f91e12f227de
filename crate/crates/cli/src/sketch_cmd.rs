//! `sketch-solve`: rotate-then-subsample least squares on CSV inputs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use randesign::sketch::{self, RotationKind, SketchPlan, SketchReport};
use randesign::{DMatrix, DVector, Stream};
use serde::Serialize;

/// Reads a headerless numeric CSV into a matrix (rows = observations).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{} line {}", path.display(), i + 1))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {}: not a number", path.display(), i + 1))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!("{} line {}: expected {} fields, got {}", path.display(), i + 1, first.len(), row.len());
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} is empty", path.display());
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A column file, or a single row, as a vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (r, c) => bail!("{} is {r}×{c}; expected a single row or column", path.display()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SketchOutput {
    #[serde(rename = "L_hat")]
    pub l_hat: f64,
    #[serde(rename = "L_beta")]
    pub l_beta: f64,
    pub excess: f64,
    pub bound: Option<f64>,
    pub remainder: Option<f64>,
    pub rho_certificate: f64,
    pub n_threshold: f64,
    pub inapplicable: Option<String>,
    pub empirical_leverage: f64,
    pub n: usize,
    pub rows: usize,
    pub coefficients: Vec<f64>,
}

pub fn sketch_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    plan: &SketchPlan,
    kind: RotationKind,
    seed: u64,
) -> Result<SketchOutput> {
    let out = sketch::sketch_solve(plan, kind, a, b, &mut Stream::new(seed, "sketch-solve", 0))?;
    let SketchReport {
        l_hat,
        l_beta,
        excess,
        bound,
        remainder,
        rho_certificate,
        n_threshold,
        inapplicable,
        empirical_leverage,
        n,
        rows,
        ..
    } = out.report;
    if let Some(why) = &inapplicable {
        log::warn!("bound not certified: {why}");
    }
    Ok(SketchOutput {
        l_hat,
        l_beta,
        excess,
        bound,
        remainder,
        rho_certificate,
        n_threshold,
        inapplicable,
        empirical_leverage,
        n,
        rows,
        coefficients: out.fit.coefficients.iter().copied().collect(),
    })
}
