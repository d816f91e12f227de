//! Benchmark fixtures.

use randesign::coverage::{self, ConditionChoice, Estimator};
use randesign::{
    BoundReport, DVector, DesignSpec, NoiseSpec, PopulationModel, RawBias, Sample, Stream,
    SymMatrix,
};

pub const SEED: u64 = 17;

/// Equicorrelated Gaussian design with correlation 0.3 and unit noise.
pub fn gaussian_model(d: usize) -> PopulationModel {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.3 }).collect())
        .collect();
    let cov = SymMatrix::from_rows(&rows).expect("valid covariance");
    let beta = DVector::from_fn(d, |i, _| 1.0 / (i + 1) as f64);
    PopulationModel::new(
        DesignSpec::gaussian(cov).expect("positive definite"),
        beta,
        NoiseSpec::Gaussian { sigma: 1.0 },
        RawBias::Zero,
    )
    .expect("valid model")
}

pub fn sample(model: &PopulationModel, n: usize) -> Sample {
    model
        .sample(n, &mut Stream::new(SEED, "bench", 0))
        .expect("sample")
}

pub fn ols_bound(model: &PopulationModel, n: usize) -> BoundReport {
    coverage::bound_for(model, Estimator::Ols, ConditionChoice::Auto, n, 0.05).expect("applicable")
}

/// Deterministic length-`len` signal for transform benchmarks.
pub fn signal(len: usize) -> Vec<f64> {
    (0..len).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect()
}

/// A random-looking SPD matrix of dimension `d`.
pub fn spd(d: usize) -> SymMatrix {
    let s = signal(d * d);
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let off = 0.1 * (s[i * d + j] + s[j * d + i]);
                    if i == j { d as f64 + off } else { off }
                })
                .collect()
        })
        .collect();
    SymMatrix::from_rows(&rows).expect("symmetric")
}
