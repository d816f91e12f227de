//! Exact population models for `(X, Y)`.
//!
//! Responses follow `Y = Xᵀβ + bias(X) + noise(X)` where `bias` is
//! orthogonalized against `X` at construction, so `β = Σ⁻¹E[XY]` holds by
//! construction and every population quantity (Σ, β, βλ, leverage constants,
//! bias moments) is available in closed form. Discrete-atom designs make all
//! expectations finite sums; Gaussian designs use Gaussian moment identities.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{nonnegative, Error, Result};
use crate::linalg::{self, Spectrum, SymMatrix};
use crate::rng::{Stream, StreamId};

const TOL_WEIGHTS: f64 = 1e-12;
const TOL_ORTHOGONAL: f64 = 1e-10;

/// Law of the covariate vector `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    /// `X` takes value `atoms[k]` with probability `weights[k]`.
    Discrete {
        atoms: Vec<DVector<f64>>,
        weights: Vec<f64>,
    },
    /// `X ~ N(0, covariance)`.
    Gaussian { covariance: SymMatrix },
}

impl DesignSpec {
    pub fn discrete(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidModel("discrete design needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        let d = atoms[0].len();
        if d == 0 {
            return Err(Error::InvalidModel("atoms must have dimension >= 1".into()));
        }
        for a in &atoms {
            linalg::check_dim(d, a.len())?;
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidModel("atom weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > TOL_WEIGHTS {
            return Err(Error::InvalidModel(format!(
                "atom weights sum to {total}, not 1"
            )));
        }
        Ok(DesignSpec::Discrete { atoms, weights })
    }

    /// Uniform weights over `atoms`.
    pub fn uniform(atoms: Vec<DVector<f64>>) -> Result<Self> {
        let k = atoms.len();
        DesignSpec::discrete(atoms, vec![1.0 / k as f64; k])
    }

    pub fn gaussian(covariance: SymMatrix) -> Result<Self> {
        let spec = covariance.eig()?;
        if spec.lambda_min() <= linalg::TOL_PSD * spec.lambda_max().abs() {
            return Err(Error::Singular {
                eigenvalue: spec.lambda_min(),
                floor: linalg::TOL_PSD * spec.lambda_max().abs(),
            });
        }
        Ok(DesignSpec::Gaussian { covariance })
    }

    /// The 2d atoms `±√(d·λⱼ) eⱼ`, each with probability `1/(2d)`, so that
    /// `Σ = diag(λ)` and the design is zero-mean with bounded leverage.
    pub fn axis_spectrum(eigenvalues: &[f64]) -> Result<Self> {
        let d = eigenvalues.len();
        if d == 0 || eigenvalues.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidModel("axis spectrum needs positive eigenvalues".into()));
        }
        let mut atoms = Vec::with_capacity(2 * d);
        for (j, &lam) in eigenvalues.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut a = DVector::zeros(d);
                a[j] = sign * (d as f64 * lam).sqrt();
                atoms.push(a);
            }
        }
        DesignSpec::uniform(atoms)
    }

    /// Finite emulation of a decaying spectrum `λⱼ = j^(-exponent)`, `j = 1..=dim`.
    pub fn decay_eigenvalues(dim: usize, exponent: f64) -> Vec<f64> {
        (1..=dim).map(|j| (j as f64).powf(-exponent)).collect()
    }

    pub fn dim(&self) -> usize {
        match self {
            DesignSpec::Discrete { atoms, .. } => atoms[0].len(),
            DesignSpec::Gaussian { covariance } => covariance.dim(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DesignSpec::Discrete { .. })
    }

    /// `Σ = E[XXᵀ]`.
    pub fn second_moment(&self) -> SymMatrix {
        match self {
            DesignSpec::Gaussian { covariance } => covariance.clone(),
            DesignSpec::Discrete { atoms, weights } => {
                let d = self.dim();
                let mut m = DMatrix::zeros(d, d);
                for (a, &w) in atoms.iter().zip(weights) {
                    m.ger(w, a, a, 1.0);
                }
                SymMatrix::symmetrize(m)
            }
        }
    }

    /// `E[X]` (zero for Gaussian designs).
    pub fn mean(&self) -> DVector<f64> {
        match self {
            DesignSpec::Gaussian { covariance } => DVector::zeros(covariance.dim()),
            DesignSpec::Discrete { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .fold(DVector::zeros(self.dim()), |acc, (a, &w)| acc + a * w),
        }
    }
}

/// Conditional law of `noise(X)`; all kinds are independent of `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Gaussian { sigma: f64 },
    /// `±magnitude` with probability 1/2 each.
    ScaledRademacher { magnitude: f64 },
    Zero,
}

impl NoiseSpec {
    /// Subgaussian parameter `σ_noise`.
    pub fn sigma_noise(&self) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => sigma,
            NoiseSpec::ScaledRademacher { magnitude } => magnitude,
            NoiseSpec::Zero => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        self.sigma_noise().powi(2)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            NoiseSpec::ScaledRademacher { magnitude } => {
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            NoiseSpec::Zero => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma } => nonnegative("sigma", sigma),
            NoiseSpec::ScaledRademacher { magnitude } => nonnegative("magnitude", magnitude),
            NoiseSpec::Zero => Ok(()),
        }
    }
}

/// Raw misspecification before orthogonalization.
#[derive(Debug, Clone, PartialEq)]
pub enum RawBias {
    Zero,
    Constant(f64),
    /// `x ↦ xᵀw`; removed entirely by orthogonalization.
    Linear(DVector<f64>),
    /// `x ↦ xᵀQx`.
    QuadraticForm(SymMatrix),
    /// One value per atom of a discrete design.
    Table(Vec<f64>),
}

impl RawBias {
    fn eval(&self, x: &DVector<f64>, atom: Option<usize>) -> f64 {
        match self {
            RawBias::Zero => 0.0,
            RawBias::Constant(c) => *c,
            RawBias::Linear(w) => x.dot(w),
            RawBias::QuadraticForm(q) => x.dot(&(q.as_matrix() * x)),
            RawBias::Table(v) => v[atom.expect("table bias evaluated off the atom support")],
        }
    }
}

/// Orthogonalized approximation error `bias(x) = raw(x) − xᵀ c`, with
/// `c = Σ⁻¹E[X·raw(X)]` so that `E[X·bias(X)] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSpec {
    raw: RawBias,
    projection: DVector<f64>,
    bound: Option<f64>,
    second_moment: f64,
    weighted_moment: f64,
    atom_values: Option<Vec<f64>>,
}

impl BiasSpec {
    pub fn raw(&self) -> &RawBias {
        &self.raw
    }

    /// The removed linear part `Σ⁻¹E[X·raw(X)]`.
    pub fn projection(&self) -> &DVector<f64> {
        &self.projection
    }

    /// `B_bias`: the supremum of `‖Σ^{-1/2}X·bias(X)‖/√d`, or `None` when
    /// the bias is unbounded on the support.
    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    /// `E[bias(X)²]`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// `E[‖Σ^{-1/2}X·bias(X)‖²]`.
    pub fn weighted_moment(&self) -> f64 {
        self.weighted_moment
    }

    pub fn is_zero(&self) -> bool {
        self.second_moment == 0.0
    }

    pub fn eval(&self, x: &DVector<f64>, atom: Option<usize>) -> f64 {
        if let (Some(values), Some(k)) = (&self.atom_values, atom) {
            return values[k];
        }
        self.raw.eval(x, atom) - x.dot(&self.projection)
    }

    /// Bias values at each atom (discrete designs only).
    pub fn atom_values(&self) -> Option<&[f64]> {
        self.atom_values.as_deref()
    }
}

/// Builds the orthogonalized bias for `raw` under `design`.
pub fn orthogonalize_bias(design: &DesignSpec, raw: RawBias) -> Result<BiasSpec> {
    let d = design.dim();
    let sigma = design.second_moment();
    let whiten = linalg::inv_sqrt(&sigma, None)?;
    match (&raw, design) {
        (RawBias::Linear(w), _) => linalg::check_dim(d, w.len())?,
        (RawBias::QuadraticForm(q), _) => linalg::check_dim(d, q.dim())?,
        _ => {}
    }
    match design {
        DesignSpec::Discrete { atoms, weights } => {
            if let RawBias::Table(v) = &raw {
                linalg::check_dim(atoms.len(), v.len())?;
            }
            let raws: Vec<f64> = atoms
                .iter()
                .enumerate()
                .map(|(k, a)| raw.eval(a, Some(k)))
                .collect();
            let cross = atoms
                .iter()
                .zip(weights)
                .zip(&raws)
                .fold(DVector::zeros(d), |acc, ((a, &w), &r)| acc + a * (w * r));
            let projection = linalg::inverse_pd(&sigma, None)?.mul_vec(&cross)?;
            let values: Vec<f64> = atoms
                .iter()
                .zip(&raws)
                .map(|(a, &r)| r - a.dot(&projection))
                .collect();

            let residual = atoms
                .iter()
                .zip(weights)
                .zip(&values)
                .fold(DVector::zeros(d), |acc, ((a, &w), &b)| acc + a * (w * b));
            let scale: f64 = atoms
                .iter()
                .zip(weights)
                .zip(&raws)
                .map(|((a, &w), &r)| w * r.abs() * a.norm())
                .sum();
            if residual.norm() > TOL_ORTHOGONAL * scale.max(1.0) {
                return Err(Error::InvalidModel(format!(
                    "bias orthogonalization residual {:e}",
                    residual.norm()
                )));
            }

            let sqrt_d = (d as f64).sqrt();
            let mut bound: f64 = 0.0;
            let mut second = 0.0;
            let mut weighted = 0.0;
            for ((a, &w), &b) in atoms.iter().zip(weights).zip(&values) {
                let lev = whiten.mul_vec(a)?.norm();
                bound = bound.max(lev * b.abs() / sqrt_d);
                second += w * b * b;
                weighted += w * lev * lev * b * b;
            }
            Ok(BiasSpec {
                raw,
                projection,
                bound: Some(bound),
                second_moment: second,
                weighted_moment: weighted,
                atom_values: Some(values),
            })
        }
        DesignSpec::Gaussian { .. } => {
            let dd = d as f64;
            let (projection, second, weighted, bound) = match &raw {
                RawBias::Zero => (DVector::zeros(d), 0.0, 0.0, Some(0.0)),
                RawBias::Linear(w) => (w.clone(), 0.0, 0.0, Some(0.0)),
                // E[X] = 0, so a constant is already orthogonal.
                RawBias::Constant(c) => {
                    let b = if *c == 0.0 { Some(0.0) } else { None };
                    (DVector::zeros(d), c * c, dd * c * c, b)
                }
                // Odd Gaussian moments vanish, so E[X·XᵀQX] = 0. With
                // A = Σ^{1/2}QΣ^{1/2}: E[(XᵀQX)²] = (tr A)² + 2 tr A² and
                // E[‖Σ^{-1/2}X‖²(XᵀQX)²] = (d + 4)((tr A)² + 2 tr A²).
                RawBias::QuadraticForm(q) => {
                    let root = linalg::sqrt_psd(&sigma)?;
                    let a = q.congruence(&root)?;
                    let tr = a.trace();
                    let tr2 = a.frobenius_norm().powi(2);
                    let second = tr * tr + 2.0 * tr2;
                    let b = if second == 0.0 { Some(0.0) } else { None };
                    (DVector::zeros(d), second, (dd + 4.0) * second, b)
                }
                RawBias::Table(_) => {
                    return Err(Error::UnsupportedBias(
                        "table biases need a discrete design".into(),
                    ))
                }
            };
            Ok(BiasSpec {
                raw,
                projection,
                bound,
                second_moment: second,
                weighted_moment: weighted,
                atom_values: None,
            })
        }
    }
}

/// `n` draws from a population (or externally supplied rows).
#[derive(Debug, Clone)]
pub struct Sample {
    /// `n × d`, one covariate vector per row.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Realized `noise(Xᵢ)`, when known.
    pub noise: Option<DVector<f64>>,
    /// Realized `bias(Xᵢ)`, when known.
    pub bias: Option<DVector<f64>>,
    /// Stream and keystream word position the sample was drawn from.
    pub provenance: Option<(StreamId, u128)>,
}

impl Sample {
    /// A sample with unknown noise/bias decomposition.
    pub fn from_data(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        linalg::check_dim(x.nrows(), y.len())?;
        Ok(Sample {
            x,
            y,
            noise: None,
            bias: None,
            provenance: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `Σ̂ = (1/n) XᵀX`.
    pub fn second_moment(&self) -> Result<SymMatrix> {
        linalg::empirical_second_moment(&self.x)
    }

    /// `Ê[XY] = (1/n) Xᵀy`.
    pub fn cross_moment(&self) -> DVector<f64> {
        self.x.tr_mul(&self.y) / self.n() as f64
    }
}

/// Leverage and ridge constants at one regularization level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RidgeConstants {
    pub lambda: f64,
    /// `d₁,λ = Σⱼ λⱼ/(λⱼ+λ)`.
    pub d1: f64,
    /// `d₂,λ = Σⱼ (λⱼ/(λⱼ+λ))²`.
    pub d2: f64,
    /// `ρ_λ`, `None` when leverage is unbounded.
    pub rho_lambda: Option<f64>,
    /// `B_bias_λ = sup |xᵀ(β − βλ)|`, `None` when unbounded.
    pub b_bias_lambda: Option<f64>,
    /// `E[‖Σλ^{-1/2}X‖⁴]`.
    pub fourth_moment: f64,
    /// `E[‖Σλ^{-1/2}(X·bias_λ(X) − λβλ)‖²]`.
    pub second_term_moment: f64,
    /// `‖βλ − β‖²_Σ`.
    pub first_term: f64,
}

/// Named constants of the regularity conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConstants {
    pub sigma_noise: f64,
    pub b_bias: Option<f64>,
    /// Exactly 1 for Gaussian designs; for zero-mean discrete designs a
    /// Hoeffding certificate `max(1, max‖Σ^{-1/2}x‖²)` (valid, not tight);
    /// `None` for discrete designs with nonzero mean.
    pub rho_1cov: Option<f64>,
    rho_2cov: Option<f64>,
    pub ridge: Vec<RidgeConstants>,
}

impl ModelConstants {
    /// `ρ_2cov`; unavailable (unbounded leverage) for Gaussian designs.
    pub fn rho_2cov(&self) -> Result<f64> {
        self.rho_2cov.ok_or(Error::Unavailable("rho_2cov"))
    }

    pub fn ridge_at(&self, lambda: f64) -> Option<&RidgeConstants> {
        self.ridge.iter().find(|r| r.lambda == lambda)
    }
}

/// Joint law of `(X, Y)` with its derived population quantities.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    design: DesignSpec,
    beta: DVector<f64>,
    noise: NoiseSpec,
    bias: BiasSpec,
    sigma: SymMatrix,
    spectrum: Spectrum,
    sampler: Sampler,
}

#[derive(Debug, Clone)]
enum Sampler {
    Atoms(WeightedIndex<f64>),
    Gaussian(DMatrix<f64>),
}

impl PopulationModel {
    pub fn new(
        design: DesignSpec,
        beta: DVector<f64>,
        noise: NoiseSpec,
        raw_bias: RawBias,
    ) -> Result<Self> {
        linalg::check_dim(design.dim(), beta.len())?;
        noise.validate()?;
        let bias = orthogonalize_bias(&design, raw_bias)?;
        let sigma = design.second_moment();
        let spectrum = sigma.eig()?;
        if spectrum.lambda_min() <= linalg::TOL_PSD * spectrum.lambda_max() {
            return Err(Error::Singular {
                eigenvalue: spectrum.lambda_min(),
                floor: linalg::TOL_PSD * spectrum.lambda_max(),
            });
        }
        let sampler = match &design {
            DesignSpec::Discrete { weights, .. } => Sampler::Atoms(
                WeightedIndex::new(weights)
                    .map_err(|e| Error::InvalidModel(format!("atom weights: {e}")))?,
            ),
            DesignSpec::Gaussian { covariance } => {
                Sampler::Gaussian(linalg::sqrt_psd(covariance)?.into_inner())
            }
        };
        Ok(PopulationModel {
            design,
            beta,
            noise,
            bias,
            sigma,
            spectrum,
            sampler,
        })
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn bias(&self) -> &BiasSpec {
        &self.bias
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    /// `Σ = E[XXᵀ]`.
    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// `β = Σ⁻¹E[XY]`.
    pub fn population_beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// `β` in the eigenbasis of `Σ`.
    pub fn beta_eigenbasis(&self) -> DVector<f64> {
        self.spectrum.vectors().tr_mul(&self.beta)
    }

    /// `βλ = (Σ + λI)⁻¹E[XY] = Σλ⁻¹Σβ`.
    pub fn ridge_target(&self, lambda: f64) -> Result<DVector<f64>> {
        nonnegative("lambda", lambda)?;
        let coords = self.beta_eigenbasis();
        let vals = self.spectrum.values();
        let shrunk = DVector::from_fn(coords.len(), |j, _| {
            if lambda == 0.0 {
                coords[j]
            } else {
                coords[j] * vals[j] / (vals[j] + lambda)
            }
        });
        Ok(self.spectrum.vectors() * shrunk)
    }

    /// `Σλ^{-1/2}` (λ = 0 gives `Σ^{-1/2}`).
    pub fn whitening(&self, lambda: f64) -> Result<SymMatrix> {
        nonnegative("lambda", lambda)?;
        Ok(self.spectrum.map(|v| 1.0 / (v + lambda).sqrt()))
    }

    /// `E[Y | X = x]`.
    pub fn regression_function(&self, x: &DVector<f64>, atom: Option<usize>) -> f64 {
        x.dot(&self.beta) + self.bias.eval(x, atom)
    }

    /// `L(w) = E[(Xᵀw − Y)²]`. Discrete designs sum over atoms directly.
    pub fn population_loss(&self, w: &DVector<f64>) -> Result<f64> {
        linalg::check_dim(self.dim(), w.len())?;
        match &self.design {
            DesignSpec::Discrete { atoms, weights } => {
                let mut total = 0.0;
                for (k, (a, &p)) in atoms.iter().zip(weights).enumerate() {
                    let r = a.dot(w) - self.regression_function(a, Some(k));
                    total += p * r * r;
                }
                Ok(total + self.noise.variance())
            }
            DesignSpec::Gaussian { .. } => {
                let diff = w - &self.beta;
                Ok(self.sigma.quad_form(&diff)? + self.bias.second_moment() + self.noise.variance())
            }
        }
    }

    /// Draws `n` i.i.d. pairs, recording each `noise(Xᵢ)` and `bias(Xᵢ)`.
    ///
    /// Per row the stream is consumed as: covariate (one atom index or `d`
    /// standard normals), then one noise draw.
    pub fn sample(&self, n: usize, stream: &mut Stream) -> Result<Sample> {
        if n == 0 {
            return Err(Error::Shape("sample size must be >= 1".into()));
        }
        let provenance = Some((stream.id().clone(), stream.word_pos()));
        let d = self.dim();
        let mut x = DMatrix::zeros(n, d);
        let mut y = DVector::zeros(n);
        let mut noise = DVector::zeros(n);
        let mut bias = DVector::zeros(n);
        let mut z = DVector::zeros(d);
        for i in 0..n {
            let (row, atom) = match (&self.sampler, &self.design) {
                (Sampler::Atoms(idx), DesignSpec::Discrete { atoms, .. }) => {
                    let k = idx.sample(stream);
                    (atoms[k].clone(), Some(k))
                }
                (Sampler::Gaussian(root), _) => {
                    for v in z.iter_mut() {
                        *v = stream.sample(StandardNormal);
                    }
                    (root * &z, None)
                }
                _ => unreachable!("sampler matches design"),
            };
            let eps = self.noise.draw(stream);
            let b = self.bias.eval(&row, atom);
            y[i] = row.dot(&self.beta) + b + eps;
            noise[i] = eps;
            bias[i] = b;
            x.set_row(i, &row.transpose());
        }
        Ok(Sample {
            x,
            y,
            noise: Some(noise),
            bias: Some(bias),
            provenance,
        })
    }

    /// Constants of the regularity conditions, with ridge constants at each
    /// `λ` of the grid.
    pub fn model_constants(&self, lambdas: &[f64]) -> Result<ModelConstants> {
        let d = self.dim();
        let (rho_1cov, rho_2cov) = match &self.design {
            DesignSpec::Gaussian { .. } => (Some(1.0), None),
            DesignSpec::Discrete { atoms, .. } => {
                let whiten = self.whitening(0.0)?;
                let max_sq = atoms
                    .iter()
                    .map(|a| whiten.quad_form_sq_norm(a))
                    .fold(0.0_f64, f64::max);
                let rho2 = (max_sq / d as f64).sqrt().max(1.0);
                let mean = self.design.mean();
                let scale = atoms.iter().map(|a| a.norm()).fold(0.0_f64, f64::max);
                let rho1 = (mean.norm() <= 1e-12 * scale.max(1.0)).then(|| max_sq.max(1.0));
                (rho1, Some(rho2))
            }
        };
        let ridge = lambdas
            .iter()
            .map(|&l| self.ridge_constants(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelConstants {
            sigma_noise: self.noise.sigma_noise(),
            b_bias: self.bias.bound(),
            rho_1cov,
            rho_2cov,
            ridge,
        })
    }

    fn ridge_constants(&self, lambda: f64) -> Result<RidgeConstants> {
        nonnegative("lambda", lambda)?;
        let vals = self.spectrum.values();
        let d1: f64 = vals.iter().map(|&v| v / (v + lambda)).sum();
        let d2: f64 = vals.iter().map(|&v| (v / (v + lambda)).powi(2)).sum();
        let beta_l = self.ridge_target(lambda)?;
        let gap = &self.beta - &beta_l;
        let first_term = self.sigma.quad_form(&gap)?;
        let whiten = self.whitening(lambda)?;
        let shift = whiten.mul_vec(&beta_l)? * lambda;
        match &self.design {
            DesignSpec::Discrete { atoms, weights } => {
                let mut max_lev: f64 = 0.0;
                let mut max_bias: f64 = 0.0;
                let mut fourth = 0.0;
                let mut second = 0.0;
                for (a, &w) in atoms.iter().zip(weights) {
                    let wa = whiten.mul_vec(a)?;
                    let lev2 = wa.norm_squared();
                    let b = a.dot(&gap);
                    max_lev = max_lev.max(lev2);
                    max_bias = max_bias.max(b.abs());
                    fourth += w * lev2 * lev2;
                    second += w * (wa * b - &shift).norm_squared();
                }
                Ok(RidgeConstants {
                    lambda,
                    d1,
                    d2,
                    rho_lambda: Some((max_lev / d1).sqrt().max(1.0)),
                    b_bias_lambda: Some(max_bias),
                    fourth_moment: fourth,
                    second_term_moment: second,
                    first_term,
                })
            }
            DesignSpec::Gaussian { .. } => {
                // X = Σ^{1/2}Z: E[(ZᵀWZ)²] = (tr W)² + 2 tr W² with W having
                // eigenvalues λⱼ/(λⱼ+λ); the second-term moment reduces to
                // d₁‖βλ−β‖²_Σ + λ²βλᵀΣλ⁻¹βλ.
                let q = whiten.mul_vec(&beta_l)?.norm_squared();
                let bounded = first_term == 0.0;
                Ok(RidgeConstants {
                    lambda,
                    d1,
                    d2,
                    rho_lambda: None,
                    b_bias_lambda: bounded.then_some(0.0),
                    fourth_moment: d1 * d1 + 2.0 * d2,
                    second_term_moment: d1 * first_term + lambda * lambda * q,
                    first_term,
                })
            }
        }
    }
}

impl SymMatrix {
    /// `‖M x‖²`.
    pub(crate) fn quad_form_sq_norm(&self, x: &DVector<f64>) -> f64 {
        (self.as_matrix() * x).norm_squared()
    }
}

/// JSON model document.
pub mod file {
    use super::*;

    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(rename_all = "kebab-case")]
    pub struct ModelDoc {
        pub design: DesignDoc,
        pub beta: Vec<f64>,
        pub noise: NoiseSpec,
        #[serde(default = "zero_bias")]
        pub bias: BiasDoc,
    }

    fn zero_bias() -> BiasDoc {
        BiasDoc::Zero
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "kebab-case")]
    pub enum DesignDoc {
        DiscreteAtoms {
            atoms: Vec<Vec<f64>>,
            /// Uniform when omitted; normalized on load.
            #[serde(default)]
            weights: Option<Vec<f64>>,
        },
        Gaussian {
            covariance: Vec<Vec<f64>>,
        },
        /// Atoms `±√(d·λⱼ)eⱼ`; either explicit eigenvalues or `dim` with a
        /// decay exponent (`λⱼ = j^(-decay)`).
        AxisSpectrum {
            #[serde(default)]
            eigenvalues: Option<Vec<f64>>,
            #[serde(default)]
            dim: Option<usize>,
            #[serde(default)]
            decay: Option<f64>,
        },
    }

    #[derive(Debug, Clone, Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "kebab-case")]
    pub enum BiasDoc {
        Zero,
        Constant { value: f64 },
        Linear { coefficients: Vec<f64> },
        QuadraticForm { matrix: Vec<Vec<f64>> },
        Table { values: Vec<f64> },
    }

    impl DesignDoc {
        pub fn build(&self) -> Result<DesignSpec> {
            match self {
                DesignDoc::DiscreteAtoms { atoms, weights } => {
                    let atoms: Vec<DVector<f64>> =
                        atoms.iter().map(|a| DVector::from_column_slice(a)).collect();
                    let k = atoms.len();
                    let mut w = weights.clone().unwrap_or_else(|| vec![1.0; k]);
                    let total: f64 = w.iter().sum();
                    if weights.is_some() && (total - 1.0).abs() > 1e-9 {
                        log::warn!("atom weights sum to {total}; normalizing");
                    }
                    if total > 0.0 {
                        w.iter_mut().for_each(|v| *v /= total);
                    }
                    DesignSpec::discrete(atoms, w)
                }
                DesignDoc::Gaussian { covariance } => {
                    DesignSpec::gaussian(SymMatrix::from_rows(covariance)?)
                }
                DesignDoc::AxisSpectrum {
                    eigenvalues,
                    dim,
                    decay,
                } => {
                    let eig = match (eigenvalues, dim) {
                        (Some(e), _) => e.clone(),
                        (None, Some(d)) => DesignSpec::decay_eigenvalues(*d, decay.unwrap_or(1.0)),
                        (None, None) => {
                            return Err(Error::InvalidModel(
                                "axis-spectrum needs eigenvalues or dim".into(),
                            ))
                        }
                    };
                    DesignSpec::axis_spectrum(&eig)
                }
            }
        }
    }

    impl BiasDoc {
        pub fn build(&self) -> Result<RawBias> {
            Ok(match self {
                BiasDoc::Zero => RawBias::Zero,
                BiasDoc::Constant { value } => RawBias::Constant(*value),
                BiasDoc::Linear { coefficients } => {
                    RawBias::Linear(DVector::from_column_slice(coefficients))
                }
                BiasDoc::QuadraticForm { matrix } => {
                    RawBias::QuadraticForm(SymMatrix::from_rows(matrix)?)
                }
                BiasDoc::Table { values } => RawBias::Table(values.clone()),
            })
        }
    }

    impl ModelDoc {
        pub fn build(&self) -> Result<PopulationModel> {
            PopulationModel::new(
                self.design.build()?,
                DVector::from_column_slice(&self.beta),
                self.noise,
                self.bias.build()?,
            )
        }
    }

    impl PopulationModel {
        pub fn from_json(text: &str) -> Result<Self> {
            let doc: ModelDoc = serde_json::from_str(text)
                .map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
            doc.build()
        }
    }
}
