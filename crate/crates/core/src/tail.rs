//! Tail inequalities for quadratic forms, vector sums and empirical second
//! moments, with a Monte Carlo violation-rate verifier.
//!
//! Thresholds are returned as computed, never clipped: a negative Chernoff
//! lower bound or a probability bound above one is reported as-is.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{delta_unit, nonnegative, open_interval, Error, Result};

/// A threshold with the confidence level it holds at and the inputs used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBoundResult {
    pub lemma: &'static str,
    pub threshold: f64,
    pub delta: f64,
    pub inputs: BTreeMap<&'static str, f64>,
}

fn log_inv(delta: f64) -> Result<f64> {
    delta_unit(delta)?;
    Ok((1.0 / delta).ln())
}

fn positive_n(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Shape("n must be >= 1".into()));
    }
    Ok(n as f64)
}

/// `P[‖AX‖² > t] ≤ δ` for `σ`-subgaussian `X` and `Σ = AAᵀ`, with
/// `t = σ²tr Σ + 2σ²√(tr Σ²·log(1/δ)) + 2σ²‖Σ‖·log(1/δ)`.
pub fn quad_form_bound(
    trace: f64,
    trace_sq: f64,
    spectral_norm: f64,
    sigma: f64,
    delta: f64,
) -> Result<f64> {
    nonnegative("trace", trace)?;
    nonnegative("trace_sq", trace_sq)?;
    nonnegative("spectral_norm", spectral_norm)?;
    nonnegative("sigma", sigma)?;
    let l = log_inv(delta)?;
    let s2 = sigma * sigma;
    Ok(s2 * trace + 2.0 * s2 * (trace_sq * l).sqrt() + 2.0 * s2 * spectral_norm * l)
}

/// `h₁(a) = 1 + a − √(1 + 2a)`.
pub fn h1(a: f64) -> Result<f64> {
    nonnegative("a", a)?;
    Ok(1.0 + a - (1.0 + 2.0 * a).sqrt())
}

/// `h₁⁻¹(b) = √(2b) + b`.
pub fn h1_inv(b: f64) -> Result<f64> {
    nonnegative("b", b)?;
    Ok((2.0 * b).sqrt() + b)
}

/// `‖Σᵢ Xᵢ‖` threshold for bounded martingale differences:
/// `√v(1 + √(8·log(1/δ))) + (4/3)·b·log(1/δ)`.
pub fn vector_bernstein_bound(v: f64, b: f64, delta: f64) -> Result<f64> {
    nonnegative("v", v)?;
    nonnegative("b", b)?;
    let l = log_inv(delta)?;
    Ok(v.sqrt() * (1.0 + (8.0 * l).sqrt()) + 4.0 / 3.0 * b * l)
}

/// `ε = γ(√(32t/n) + 2t/n)` with `t = d·log(1 + 2/η) + log(2/δ)`.
pub fn covariance_subgaussian_eps(gamma: f64, d: usize, n: usize, delta: f64, eta: f64) -> Result<f64> {
    open_interval("gamma", gamma, 0.0, f64::INFINITY, "(0, inf)")?;
    open_interval("eta", eta, 0.0, 0.5, "(0, 1/2)")?;
    delta_unit(delta)?;
    let n = positive_n(n)?;
    let t = d as f64 * (1.0 + 2.0 / eta).ln() + (2.0 / delta).ln();
    Ok(gamma * ((32.0 * t / n).sqrt() + 2.0 * t / n))
}

/// Half-width `ε/(1 − 2η)` of the eigenvalue window around 1.
pub fn covariance_window(gamma: f64, d: usize, n: usize, delta: f64, eta: f64) -> Result<f64> {
    Ok(covariance_subgaussian_eps(gamma, d, n, delta, eta)? / (1.0 - 2.0 * eta))
}

/// Lower threshold `1 − √((2b²/n)·log(d/δ))` for `λ_min` of the empirical
/// second moment. May be negative.
pub fn matrix_chernoff_lower(b: f64, d: usize, n: usize, delta: f64) -> Result<f64> {
    if !(b >= 1.0 && b.is_finite()) {
        return Err(Error::Domain {
            name: "b",
            value: b,
            domain: "[1, inf)",
        });
    }
    delta_unit(delta)?;
    let n = positive_n(n)?;
    Ok(1.0 - (2.0 * b * b / n * (d as f64 / delta).ln()).sqrt())
}

/// `(√(2σ̄²t/n) + b̄t/(3n),  k̄·t/(eᵗ − t − 1))`. The probability is not
/// clipped to 1.
pub fn matrix_bernstein_tail(sigma_bar: f64, b_bar: f64, k_bar: f64, n: usize, t: f64) -> Result<(f64, f64)> {
    for (name, v) in [("sigma_bar", sigma_bar), ("b_bar", b_bar), ("k_bar", k_bar), ("t", t)] {
        open_interval(name, v, 0.0, f64::INFINITY, "(0, inf)")?;
    }
    let n = positive_n(n)?;
    let threshold = (2.0 * sigma_bar * sigma_bar * t / n).sqrt() + b_bar * t / (3.0 * n);
    let prob = k_bar * t / (t.exp_m1() - t);
    Ok((threshold, prob))
}

/// The `t > 0` at which `k̄·t/(eᵗ − t − 1) = δ` (the map is decreasing).
pub fn matrix_bernstein_t(k_bar: f64, delta: f64) -> Result<f64> {
    open_interval("k_bar", k_bar, 0.0, f64::INFINITY, "(0, inf)")?;
    delta_unit(delta)?;
    let f = |t: f64| k_bar * t / (t.exp_m1() - t) - delta;
    let (mut lo, mut hi) = (1e-12, 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NumericalFailure { iterations: 0 });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Monte Carlo outcome of a violation-rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    /// `√(rate(1 − rate)/trials)`.
    pub se: f64,
}

impl McEstimate {
    pub fn from_counts(violations: usize, trials: usize) -> Self {
        let rate = violations as f64 / trials as f64;
        McEstimate {
            trials,
            violations,
            rate,
            se: (rate * (1.0 - rate) / trials as f64).sqrt(),
        }
    }

    /// Binomial standard error at the nominal level `δ`.
    pub fn se_at(&self, delta: f64) -> f64 {
        (delta * (1.0 - delta) / self.trials as f64).sqrt()
    }

    /// `rate ≤ δ + 3·√(δ(1 − δ)/trials)`.
    pub fn consistent_with(&self, delta: f64) -> bool {
        self.rate <= delta + 3.0 * self.se_at(delta)
    }

    /// Normal-approximation interval `rate ± z·se`, clipped to `[0, 1]`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        ((self.rate - z * self.se).max(0.0), (self.rate + z * self.se).min(1.0))
    }
}

/// Fraction of `trials` on which `event` is true. Trial `i` draws from
/// stream `(master_seed, label, i)`, so the result does not depend on how
/// the trials are spread over threads.
pub fn mc_violation_rate<F>(trials: usize, master_seed: u64, label: &str, event: F) -> Result<McEstimate>
where
    F: Fn(&mut crate::rng::Stream) -> Result<bool> + Sync,
{
    if trials == 0 {
        return Err(Error::Shape("trials must be >= 1".into()));
    }
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|i| event(&mut crate::rng::Stream::new(master_seed, label, i)).map(usize::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McEstimate::from_counts(hits, trials))
}

/// Reference samplers on which each inequality's hypotheses hold exactly.
pub mod reference {
    use nalgebra::{DMatrix, DVector};
    use rand::distr::Distribution;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use serde::{Deserialize, Serialize};

    use super::*;
    use crate::linalg::{self, SymMatrix};
    use crate::population::DesignSpec;
    use crate::rng::Stream;

    fn d4() -> usize {
        4
    }
    fn d3() -> usize {
        3
    }
    fn d2() -> usize {
        2
    }
    fn d8() -> usize {
        8
    }
    fn one() -> f64 {
        1.0
    }
    fn n1000() -> usize {
        1000
    }
    fn n2000() -> usize {
        2000
    }
    fn n200() -> usize {
        200
    }
    fn n500() -> usize {
        500
    }
    fn eta() -> f64 {
        0.05
    }
    fn tenth() -> f64 {
        0.1
    }

    /// One sampler configuration per inequality.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    #[serde(tag = "lemma", rename_all = "kebab-case")]
    pub enum TailScenario {
        /// `X ~ N(0, σ²I)` in `ℝ^dim`, `A = I`.
        QuadraticForm {
            #[serde(default = "d4")]
            dim: usize,
            #[serde(default = "one")]
            sigma: f64,
        },
        /// `Xᵢ = εᵢuᵢ` with Rademacher `εᵢ` and fixed `uᵢ ∈ [-1, 1]^dim`.
        VectorBernstein {
            #[serde(default = "d3")]
            dim: usize,
            #[serde(default = "n1000")]
            n: usize,
        },
        /// Isotropic Gaussian rows, `γ = 1`.
        CovarianceSpectrum {
            #[serde(default = "d3")]
            dim: usize,
            #[serde(default = "n2000")]
            n: usize,
            #[serde(default = "eta")]
            eta: f64,
        },
        /// Uniform over `±√dim·eⱼ`, so `E XXᵀ = I` and `‖X‖ = b = √dim`.
        MatrixChernoff {
            #[serde(default = "d2")]
            dim: usize,
            #[serde(default = "n200")]
            n: usize,
        },
        /// `M = Σλ^{-1/2}(XXᵀ − Σ)Σλ^{-1/2}` for an axis-spectrum design with
        /// `λⱼ = j^(-decay)`; `σ̄`, `b̄`, `k̄` are computed exactly from the atoms.
        MatrixBernstein {
            #[serde(default = "d8")]
            dim: usize,
            #[serde(default = "one")]
            decay: f64,
            #[serde(default = "tenth")]
            lambda: f64,
            #[serde(default = "n500")]
            n: usize,
        },
    }

    /// Exact `(σ̄, b̄, k̄)` for `M = W(XXᵀ − Σ)W`, `W = Σλ^{-1/2}`, over a
    /// discrete design.
    pub fn bernstein_parameters(design: &DesignSpec, lambda: f64) -> Result<(f64, f64, f64)> {
        let DesignSpec::Discrete { atoms, weights } = design else {
            return Err(Error::Unavailable("bernstein parameters need a discrete design"));
        };
        let sigma = design.second_moment();
        let w = linalg::inv_sqrt(&linalg::regularize(&sigma, lambda)?, None)?;
        let ww = sigma.congruence(&w)?;
        let d = design.dim();
        let mut second = DMatrix::zeros(d, d);
        let mut b_bar = f64::NEG_INFINITY;
        for (a, &p) in atoms.iter().zip(weights) {
            let v = w.mul_vec(a)?;
            let m = SymMatrix::symmetrize(&v * v.transpose() - ww.as_matrix());
            b_bar = b_bar.max(m.eig()?.lambda_max());
            second += m.as_matrix() * m.as_matrix() * p;
        }
        let second = SymMatrix::symmetrize(second);
        let s2 = second.eig()?.lambda_max();
        Ok((s2.sqrt(), b_bar, second.trace() / s2))
    }

    enum Prepared {
        Quad { dim: usize, sigma: f64 },
        Vector { vectors: Vec<DVector<f64>> },
        Covariance { dim: usize, n: usize },
        Chernoff { dim: usize, n: usize },
        Bernstein { atoms: Vec<DVector<f64>>, whitened_sigma: SymMatrix, n: usize },
    }

    impl TailScenario {
        pub fn lemma(&self) -> &'static str {
            match self {
                TailScenario::QuadraticForm { .. } => "quadratic-form",
                TailScenario::VectorBernstein { .. } => "vector-bernstein",
                TailScenario::CovarianceSpectrum { .. } => "covariance-spectrum",
                TailScenario::MatrixChernoff { .. } => "matrix-chernoff",
                TailScenario::MatrixBernstein { .. } => "matrix-bernstein",
            }
        }

        /// The five default configurations.
        pub fn defaults() -> Vec<TailScenario> {
            vec![
                TailScenario::QuadraticForm { dim: 4, sigma: 1.0 },
                TailScenario::VectorBernstein { dim: 3, n: 1000 },
                TailScenario::CovarianceSpectrum { dim: 3, n: 2000, eta: 0.05 },
                TailScenario::MatrixChernoff { dim: 2, n: 200 },
                TailScenario::MatrixBernstein { dim: 8, decay: 1.0, lambda: 0.1, n: 500 },
            ]
        }

        fn fixed_vectors(dim: usize, n: usize) -> Vec<DVector<f64>> {
            let mut s = Stream::new(0, "vector-bernstein/vectors", 0);
            (0..n)
                .map(|_| DVector::from_fn(dim, |_, _| s.random_range(-1.0..=1.0)))
                .collect()
        }

        fn bernstein_design(dim: usize, decay: f64) -> Result<DesignSpec> {
            DesignSpec::axis_spectrum(&DesignSpec::decay_eigenvalues(dim, decay))
        }

        fn prepare(&self) -> Result<Prepared> {
            Ok(match *self {
                TailScenario::QuadraticForm { dim, sigma } => {
                    nonnegative("sigma", sigma)?;
                    Prepared::Quad { dim, sigma }
                }
                TailScenario::VectorBernstein { dim, n } => Prepared::Vector {
                    vectors: Self::fixed_vectors(dim, n),
                },
                TailScenario::CovarianceSpectrum { dim, n, .. } => Prepared::Covariance { dim, n },
                TailScenario::MatrixChernoff { dim, n } => Prepared::Chernoff { dim, n },
                TailScenario::MatrixBernstein { dim, decay, lambda, n } => {
                    let design = Self::bernstein_design(dim, decay)?;
                    let sigma = design.second_moment();
                    let w = linalg::inv_sqrt(&linalg::regularize(&sigma, lambda)?, None)?;
                    let DesignSpec::Discrete { atoms, .. } = &design else { unreachable!() };
                    let atoms = atoms.iter().map(|a| w.mul_vec(a)).collect::<Result<Vec<_>>>()?;
                    Prepared::Bernstein {
                        atoms,
                        whitened_sigma: sigma.congruence(&w)?,
                        n,
                    }
                }
            })
        }

        /// The threshold at level `δ`, with the inputs that produced it.
        pub fn threshold(&self, delta: f64) -> Result<TailBoundResult> {
            let mut inputs = BTreeMap::new();
            let threshold = match *self {
                TailScenario::QuadraticForm { dim, sigma } => {
                    let d = dim as f64;
                    inputs.insert("trace", d);
                    inputs.insert("trace_sq", d);
                    inputs.insert("spectral_norm", 1.0);
                    inputs.insert("sigma", sigma);
                    quad_form_bound(d, d, 1.0, sigma, delta)?
                }
                TailScenario::VectorBernstein { dim, n } => {
                    let vs = Self::fixed_vectors(dim, n);
                    let v: f64 = vs.iter().map(|u| u.norm_squared()).sum();
                    let b = vs.iter().map(|u| u.norm()).fold(0.0, f64::max);
                    inputs.insert("v", v);
                    inputs.insert("b", b);
                    vector_bernstein_bound(v, b, delta)?
                }
                TailScenario::CovarianceSpectrum { dim, n, eta } => {
                    inputs.insert("gamma", 1.0);
                    inputs.insert("d", dim as f64);
                    inputs.insert("n", n as f64);
                    inputs.insert("eta", eta);
                    covariance_window(1.0, dim, n, delta, eta)?
                }
                TailScenario::MatrixChernoff { dim, n } => {
                    let b = (dim as f64).sqrt();
                    inputs.insert("b", b);
                    inputs.insert("d", dim as f64);
                    inputs.insert("n", n as f64);
                    matrix_chernoff_lower(b, dim, n, delta)?
                }
                TailScenario::MatrixBernstein { dim, decay, lambda, n } => {
                    let design = Self::bernstein_design(dim, decay)?;
                    let (sb, bb, kb) = bernstein_parameters(&design, lambda)?;
                    let t = matrix_bernstein_t(kb, delta)?;
                    inputs.insert("sigma_bar", sb);
                    inputs.insert("b_bar", bb);
                    inputs.insert("k_bar", kb);
                    inputs.insert("t", t);
                    inputs.insert("n", n as f64);
                    matrix_bernstein_tail(sb, bb, kb, n, t)?.0
                }
            };
            Ok(TailBoundResult {
                lemma: self.lemma(),
                threshold,
                delta,
                inputs,
            })
        }

        /// Whether one fresh draw violates the inequality at `threshold`.
        fn violates(prepared: &Prepared, threshold: f64, s: &mut Stream) -> Result<bool> {
            Ok(match prepared {
                Prepared::Quad { dim, sigma } => {
                    let sq: f64 = (0..*dim)
                        .map(|_| {
                            let z: f64 = s.sample(StandardNormal);
                            (sigma * z).powi(2)
                        })
                        .sum();
                    sq > threshold
                }
                Prepared::Vector { vectors } => {
                    let mut total = DVector::zeros(vectors[0].len());
                    for u in vectors {
                        if s.random::<bool>() {
                            total += u;
                        } else {
                            total -= u;
                        }
                    }
                    total.norm() > threshold
                }
                Prepared::Covariance { dim, n } => {
                    let x = DMatrix::from_fn(*n, *dim, |_, _| s.sample::<f64, _>(StandardNormal));
                    let spec = linalg::empirical_second_moment(&x)?.eig()?;
                    spec.lambda_max() > 1.0 + threshold || spec.lambda_min() < 1.0 - threshold
                }
                Prepared::Chernoff { dim, n } => {
                    // Only the counts per axis matter: Σ̂ = diag(dim · count_j / n).
                    let mut counts = vec![0usize; *dim];
                    for _ in 0..*n {
                        counts[s.random_range(0..*dim)] += 1;
                        let _sign: bool = s.random();
                    }
                    let min = counts.iter().min().copied().unwrap_or(0);
                    (*dim as f64) * min as f64 / (*n as f64) < threshold
                }
                Prepared::Bernstein { atoms, whitened_sigma, n } => {
                    let pick = rand::distr::Uniform::new(0, atoms.len())
                        .map_err(|e| Error::Shape(e.to_string()))?;
                    let mut counts = vec![0usize; atoms.len()];
                    for _ in 0..*n {
                        counts[pick.sample(s)] += 1;
                    }
                    let d = whitened_sigma.dim();
                    let mut m = DMatrix::zeros(d, d);
                    for (a, &c) in atoms.iter().zip(&counts) {
                        if c > 0 {
                            m.ger(c as f64 / *n as f64, a, a, 1.0);
                        }
                    }
                    let m = SymMatrix::symmetrize(m - whitened_sigma.as_matrix());
                    m.eig()?.lambda_max() > threshold
                }
            })
        }

        /// Monte Carlo violation rate at level `δ`. Every `δ` reuses the
        /// same per-trial streams.
        pub fn violation_rate(&self, delta: f64, trials: usize, master_seed: u64) -> Result<McEstimate> {
            let threshold = self.threshold(delta)?.threshold;
            let prepared = self.prepare()?;
            let label = format!("tails/{}", self.lemma());
            mc_violation_rate(trials, master_seed, &label, |s| {
                Self::violates(&prepared, threshold, s)
            })
        }
    }
}
