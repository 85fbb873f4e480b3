//! Unnormalized target densities with analytic gradients.
//!
//! Every target is defined up to an additive constant in log space and has
//! full support on R^d. Targets that are known to be normalized by an explicit
//! transport map carry it in [`TargetDensity::exact_map`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::{AffineMap, BananaMap, RosenbrockMap, TransportMap};

/// Anything that exposes an unnormalized log-density and its gradient.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, y: &[f64]) -> f64;

    /// Writes ∇ log π(y) into `grad`.
    fn grad_log_density_into(&self, y: &[f64], grad: &mut [f64]);

    fn grad_log_density(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_log_density_into(y, &mut g);
        g
    }
}

#[derive(Debug, Clone)]
struct MixtureComponent {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    /// log w_c − ½ log det(2π Σ_c)
    log_scale: f64,
}

#[derive(Debug, Clone)]
enum TargetKind {
    Banana {
        s: f64,
        b: f64,
    },
    Funnel {
        n: f64,
        sum_x: f64,
        sum_x2: f64,
        alpha: f64,
        beta: f64,
    },
    HybridRosenbrock {
        n1: usize,
        n2: usize,
        mu: f64,
        a: f64,
        /// b[j][i-2], j = 0..n2, i = 2..=n1
        b: Vec<Vec<f64>>,
    },
    Mixture(Vec<MixtureComponent>),
    Gaussian {
        mean: DVector<f64>,
        precision: DMatrix<f64>,
    },
}

/// A named, immutable, unnormalized target density.
#[derive(Debug, Clone)]
pub struct TargetDensity {
    pub name: String,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    pub exact_map: Option<TransportMap>,
    kind: TargetKind,
}

impl LogDensity for TargetDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim);
        match &self.kind {
            TargetKind::Banana { s, b } => {
                let u = y[1] + b * y[0] * y[0] - 100.0 * b;
                -y[0] * y[0] / (s * s) - u * u
            }
            TargetKind::Funnel {
                n,
                sum_x,
                sum_x2,
                alpha,
                beta,
            } => {
                let (mu, gamma) = (y[0], y[1]);
                let ss = sum_x2 - 2.0 * mu * sum_x + n * mu * mu;
                -n * gamma - 0.5 * (-2.0 * gamma).exp() * ss - mu * mu / 6.0 + alpha * gamma
                    - beta * gamma.exp()
            }
            TargetKind::HybridRosenbrock { n1, n2, mu, a, b } => {
                let mut acc = -a * (y[0] - mu) * (y[0] - mu);
                for (j, bj) in b.iter().enumerate().take(*n2) {
                    for i in 2..=*n1 {
                        let (cur, prev) = rosenbrock_indices(*n1, j, i);
                        let r = y[cur] - y[prev] * y[prev];
                        acc -= bj[i - 2] * r * r;
                    }
                }
                acc
            }
            TargetKind::Mixture(components) => {
                let terms: Vec<f64> = components
                    .iter()
                    .map(|c| c.log_scale - 0.5 * quad_form(&c.precision, &c.mean, y))
                    .collect();
                log_sum_exp(&terms)
            }
            TargetKind::Gaussian { mean, precision } => -0.5 * quad_form(precision, mean, y),
        }
    }

    fn grad_log_density_into(&self, y: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim);
        match &self.kind {
            TargetKind::Banana { s, b } => {
                let u = y[1] + b * y[0] * y[0] - 100.0 * b;
                grad[0] = -2.0 * y[0] / (s * s) - 4.0 * b * y[0] * u;
                grad[1] = -2.0 * u;
            }
            TargetKind::Funnel {
                n,
                sum_x,
                sum_x2,
                alpha,
                beta,
            } => {
                let (mu, gamma) = (y[0], y[1]);
                let e2 = (-2.0 * gamma).exp();
                let ss = sum_x2 - 2.0 * mu * sum_x + n * mu * mu;
                grad[0] = e2 * (sum_x - n * mu) - mu / 3.0;
                grad[1] = -n + e2 * ss + alpha - beta * gamma.exp();
            }
            TargetKind::HybridRosenbrock { n1, n2, mu, a, b } => {
                grad.iter_mut().for_each(|g| *g = 0.0);
                grad[0] = -2.0 * a * (y[0] - mu);
                for (j, bj) in b.iter().enumerate().take(*n2) {
                    for i in 2..=*n1 {
                        let (cur, prev) = rosenbrock_indices(*n1, j, i);
                        let r = y[cur] - y[prev] * y[prev];
                        grad[cur] -= 2.0 * bj[i - 2] * r;
                        grad[prev] += 4.0 * bj[i - 2] * r * y[prev];
                    }
                }
            }
            TargetKind::Mixture(components) => {
                let d = self.dim;
                let mut terms = Vec::with_capacity(components.len());
                let mut scores = Vec::with_capacity(components.len());
                for c in components {
                    let diff = DVector::from_fn(d, |i, _| y[i] - c.mean[i]);
                    let pd = &c.precision * &diff;
                    terms.push(c.log_scale - 0.5 * diff.dot(&pd));
                    scores.push(pd);
                }
                let lse = log_sum_exp(&terms);
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (t, pd) in terms.iter().zip(&scores) {
                    let r = (t - lse).exp();
                    for i in 0..d {
                        grad[i] -= r * pd[i];
                    }
                }
            }
            TargetKind::Gaussian { mean, precision } => {
                let d = self.dim;
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += precision[(i, j)] * (y[j] - mean[j]);
                    }
                    grad[i] = -acc;
                }
            }
        }
    }
}

impl TargetDensity {
    /// (N, ΣX, ΣX²) for funnel targets.
    pub fn funnel_data_summary(&self) -> Option<(f64, f64, f64)> {
        match self.kind {
            TargetKind::Funnel { n, sum_x, sum_x2, .. } => Some((n, sum_x, sum_x2)),
            _ => None,
        }
    }
}

/// Index of y_{j,i} (block j zero-based, i = 2..=n1) and of its predecessor
/// y_{j,i-1} in the flattened hybrid Rosenbrock vector.
fn rosenbrock_indices(n1: usize, j: usize, i: usize) -> (usize, usize) {
    let cur = 1 + j * (n1 - 1) + (i - 2);
    let prev = if i == 2 { 0 } else { cur - 1 };
    (cur, prev)
}

fn quad_form(precision: &DMatrix<f64>, mean: &DVector<f64>, y: &[f64]) -> f64 {
    let d = mean.len();
    let mut acc = 0.0;
    for i in 0..d {
        let di = y[i] - mean[i];
        for j in 0..d {
            acc += di * precision[(i, j)] * (y[j] - mean[j]);
        }
    }
    acc
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Banana target `log π(y) = −y₁²/s² − (y₂ + b·y₁² − 100b)²`.
pub fn banana(s: f64, b: f64) -> Result<TargetDensity> {
    if !(s > 0.0) || !s.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "banana requires s > 0 and finite b (got s={s}, b={b})"
        )));
    }
    Ok(TargetDensity {
        name: "banana".into(),
        dim: 2,
        params: params(&[("s", s), ("b", b)]),
        exact_map: Some(TransportMap::Banana(BananaMap::new(s, b)?)),
        kind: TargetKind::Banana { s, b },
    })
}

/// Prior hyperparameters of the funnel posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunnelPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FunnelPrior {
    fn default() -> Self {
        FunnelPrior {
            alpha: 0.75,
            beta: 0.5,
        }
    }
}

/// Posterior over (μ, γ = log σ) for normal data with a N(0, 3) prior on μ
/// and a Gamma(α, β) prior on σ.
pub fn funnel_posterior(data: &[f64], prior: FunnelPrior) -> Result<TargetDensity> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("funnel requires at least one datum".into()));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("funnel data must be finite".into()));
    }
    let n = data.len() as f64;
    let sum_x: f64 = data.iter().sum();
    let sum_x2: f64 = data.iter().map(|x| x * x).sum();
    Ok(TargetDensity {
        name: "funnel".into(),
        dim: 2,
        params: params(&[("n", n), ("alpha", prior.alpha), ("beta", prior.beta)]),
        exact_map: None,
        kind: TargetKind::Funnel {
            n,
            sum_x,
            sum_x2,
            alpha: prior.alpha,
            beta: prior.beta,
        },
    })
}

const FUNNEL_DATA: &str = include_str!("../data/funnel_x.csv");

/// The shipped funnel dataset (see `data/funnel_x.csv`).
pub fn funnel_dataset() -> Vec<f64> {
    FUNNEL_DATA
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().expect("shipped funnel data is well formed"))
        .collect()
}

/// Seed, size and scale used to generate the shipped funnel dataset.
pub const FUNNEL_DATA_SEED: u64 = 20240601;
pub const FUNNEL_DATA_SIZE: usize = 100;
pub const FUNNEL_DATA_SCALE: f64 = 0.25;

/// Regenerates the funnel dataset: `size` draws of `scale · N(0, 1)`.
pub fn generate_funnel_data(seed: u64, size: usize, scale: f64) -> Vec<f64> {
    let mut noise = crate::samplers::NoiseStream::new(seed, 0);
    let mut buf = vec![0.0; size];
    noise.fill(&mut buf);
    buf.iter().map(|z| scale * z).collect()
}

/// Hybrid Rosenbrock target with `n2` blocks of length `n1 − 1` sharing y₁.
///
/// `b` has shape `n2 × (n1 − 1)`; row j holds b_{j,2..n1}.
pub fn hybrid_rosenbrock(
    n1: usize,
    n2: usize,
    mu: f64,
    a: f64,
    b: &[Vec<f64>],
) -> Result<TargetDensity> {
    if n1 < 2 || n2 < 1 {
        return Err(Error::InvalidParameter(format!(
            "hybrid Rosenbrock needs n1 >= 2 and n2 >= 1 (got {n1}, {n2})"
        )));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("a must be positive (got {a})")));
    }
    if b.len() != n2 || b.iter().any(|row| row.len() != n1 - 1) {
        return Err(Error::InvalidParameter(format!(
            "b must have shape {n2} x {}",
            n1 - 1
        )));
    }
    if b.iter().flatten().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("all b entries must be positive".into()));
    }
    let dim = (n1 - 1) * n2 + 1;
    let map = RosenbrockMap::new(n1, n2, mu, a, b.to_vec())?;
    Ok(TargetDensity {
        name: "hybrid_rosenbrock".into(),
        dim,
        params: params(&[("n1", n1 as f64), ("n2", n2 as f64), ("mu", mu), ("a", a)]),
        exact_map: Some(TransportMap::Rosenbrock(map)),
        kind: TargetKind::HybridRosenbrock {
            n1,
            n2,
            mu,
            a,
            b: b.to_vec(),
        },
    })
}

const WEIGHT_SUM_TOL: f64 = 5e-3;

/// Gaussian mixture with full covariances; weights must sum to one up to
/// `WEIGHT_SUM_TOL` and are renormalized.
pub fn gaussian_mixture(
    means: &[Vec<f64>],
    covs: &[DMatrix<f64>],
    weights: &[f64],
) -> Result<TargetDensity> {
    if means.is_empty() || means.len() != covs.len() || means.len() != weights.len() {
        return Err(Error::InvalidParameter(
            "means, covariances and weights must be nonempty and of equal length".into(),
        ));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter("mixture weights must be positive".into()));
    }
    // The published four-mode weights sum to 0.999, so near-unit sums are
    // accepted and renormalized.
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidParameter(format!(
            "mixture weights must sum to 1 (sum = {total})"
        )));
    }
    let d = means[0].len();
    let mut components = Vec::with_capacity(means.len());
    for ((m, c), w) in means.iter().zip(covs).zip(weights) {
        if m.len() != d || c.nrows() != d || c.ncols() != d {
            return Err(Error::InvalidParameter("inconsistent component dimensions".into()));
        }
        let chol = c.clone().cholesky().ok_or_else(|| {
            Error::InvalidParameter("mixture covariance is not positive definite".into())
        })?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        components.push(MixtureComponent {
            mean: DVector::from_column_slice(m),
            precision: chol.inverse(),
            log_scale: (w / total).ln() - 0.5 * (log_det + d as f64 * (2.0 * PI).ln()),
        });
    }
    let mut p = BTreeMap::new();
    p.insert("components".to_string(), means.len() as f64);
    for (i, w) in weights.iter().enumerate() {
        p.insert(format!("w{}", i + 1), *w);
    }
    Ok(TargetDensity {
        name: "gaussian_mixture".into(),
        dim: d,
        params: p,
        exact_map: None,
        kind: TargetKind::Mixture(components),
    })
}

/// The four-mode mixture with identity covariances used in the multimodal experiment.
pub fn four_mode_mixture() -> TargetDensity {
    let means = vec![
        vec![-4.0, -4.0],
        vec![4.0, -4.0],
        vec![-4.0, 4.0],
        vec![4.0, 4.0],
    ];
    let covs = vec![DMatrix::identity(2, 2); 4];
    gaussian_mixture(&means, &covs, &[0.337, 0.050, 0.284, 0.328])
        .expect("reference mixture parameters are valid")
}

/// Exact i.i.d. draws from a Gaussian mixture (weights renormalized).
pub fn sample_mixture(
    means: &[Vec<f64>],
    covs: &[DMatrix<f64>],
    weights: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    // validates the parameters
    gaussian_mixture(means, covs, weights)?;
    let factors = covs
        .iter()
        .map(|c| c.clone().cholesky().map(|ch| ch.l()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidParameter("mixture covariance is not positive definite".into()))?;
    let total: f64 = weights.iter().sum();
    let d = means[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; d];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut c = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                c = i;
                break;
            }
        }
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let l = &factors[c];
        out.push((0..d).map(|i| means[c][i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>()).collect());
    }
    Ok(out)
}

/// N(0, diag(1/m, 1/L)); normalized to N(0, I) by S(y) = (√m y₁, √L y₂).
pub fn anisotropic_gaussian(m: f64, l: f64) -> Result<TargetDensity> {
    if !(m > 0.0) || !(m <= l) || !l.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "anisotropic Gaussian requires 0 < m <= L (got m={m}, L={l})"
        )));
    }
    let map = AffineMap::diagonal(&[m.sqrt(), l.sqrt()], &[0.0, 0.0])?;
    Ok(TargetDensity {
        name: "anisotropic_gaussian".into(),
        dim: 2,
        params: params(&[("m", m), ("L", l)]),
        exact_map: Some(TransportMap::Affine(map)),
        kind: TargetKind::Gaussian {
            mean: DVector::zeros(2),
            precision: DMatrix::from_diagonal(&DVector::from_vec(vec![m, l])),
        },
    })
}

/// General Gaussian N(mean, cov); exact map is the Cholesky whitening S(y) = L⁻¹(y − mean).
pub fn gaussian(mean: &[f64], cov: &DMatrix<f64>) -> Result<TargetDensity> {
    let d = mean.len();
    if d == 0 || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidParameter("covariance shape must match the mean".into()));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular covariance".into()))?;
    let m = DVector::from_column_slice(mean);
    let offset = -(&l_inv * &m);
    let map = AffineMap::new(l_inv, offset.as_slice())?;
    Ok(TargetDensity {
        name: "gaussian".into(),
        dim: d,
        params: params(&[("dim", d as f64)]),
        exact_map: Some(TransportMap::Affine(map)),
        kind: TargetKind::Gaussian {
            mean: m,
            precision: chol.inverse(),
        },
    })
}

pub fn standard_normal(dim: usize) -> Result<TargetDensity> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let mut t = gaussian(&vec![0.0; dim], &DMatrix::identity(dim, dim))?;
    t.name = "standard_normal".into();
    Ok(t)
}

/// Serializable target preset, addressed by `name` in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Banana {
        s: f64,
        b: f64,
    },
    Funnel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<Vec<f64>>,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    HybridRosenbrock {
        n1: usize,
        n2: usize,
        mu: f64,
        a: f64,
        /// Either a single value shared by all b_{j,i} or a full `n2 × (n1−1)` table.
        b: RosenbrockCoefficients,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
        weights: Vec<f64>,
    },
    AnisotropicGaussian {
        m: f64,
        #[serde(rename = "L")]
        l: f64,
    },
    StandardNormal {
        dim: usize,
    },
}

fn default_alpha() -> f64 {
    FunnelPrior::default().alpha
}

fn default_beta() -> f64 {
    FunnelPrior::default().beta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RosenbrockCoefficients {
    Uniform(f64),
    Table(Vec<Vec<f64>>),
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetDensity> {
        match self {
            TargetSpec::Banana { s, b } => banana(*s, *b),
            TargetSpec::Funnel { data, alpha, beta } => {
                let data = data.clone().unwrap_or_else(funnel_dataset);
                funnel_posterior(
                    &data,
                    FunnelPrior {
                        alpha: *alpha,
                        beta: *beta,
                    },
                )
            }
            TargetSpec::HybridRosenbrock { n1, n2, mu, a, b } => {
                let table = match b {
                    RosenbrockCoefficients::Uniform(v) => {
                        vec![vec![*v; n1.saturating_sub(1)]; *n2]
                    }
                    RosenbrockCoefficients::Table(t) => t.clone(),
                };
                hybrid_rosenbrock(*n1, *n2, *mu, *a, &table)
            }
            TargetSpec::GaussianMixture {
                means,
                covs,
                weights,
            } => {
                let mats = covs
                    .iter()
                    .map(|rows| matrix_from_rows(rows))
                    .collect::<Result<Vec<_>>>()?;
                gaussian_mixture(means, &mats, weights)
            }
            TargetSpec::AnisotropicGaussian { m, l } => anisotropic_gaussian(*m, *l),
            TargetSpec::StandardNormal { dim } => standard_normal(*dim),
        }
    }

    /// Exact i.i.d. draws, where the target can be sampled directly: mixtures,
    /// Gaussians, and targets whose exact map pushes to a known Gaussian
    /// (N(0, ½I) for the banana, N(0, I) otherwise).
    pub fn exact_samples(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        use crate::transport::Transport;
        if let TargetSpec::GaussianMixture { means, covs, weights } = self {
            let mats = covs
                .iter()
                .map(|rows| matrix_from_rows(rows))
                .collect::<Result<Vec<_>>>()?;
            return sample_mixture(means, &mats, weights, n, seed);
        }
        let reference_sd = match self {
            TargetSpec::Banana { .. } => std::f64::consts::FRAC_1_SQRT_2,
            TargetSpec::Funnel { .. } => {
                return Err(Error::InvalidParameter(
                    "the funnel posterior cannot be sampled exactly".into(),
                ))
            }
            _ => 1.0,
        };
        let target = self.build()?;
        let mut noise = crate::samplers::NoiseStream::new(seed, 0);
        let mut xi = vec![0.0; target.dim];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            noise.fill(&mut xi);
            xi.iter_mut().for_each(|v| *v *= reference_sd);
            out.push(match &target.exact_map {
                Some(map) => map.inverse(&xi)?,
                None => xi.clone(),
            });
        }
        Ok(out)
    }

    /// The reference banana (s = 4, b = 0.01).
    pub fn reference_banana() -> Self {
        TargetSpec::Banana { s: 4.0, b: 0.01 }
    }

    /// The seven-dimensional hybrid Rosenbrock (n1 = 4, n2 = 2, μ = 1, a = 30, b = 20).
    pub fn reference_rosenbrock() -> Self {
        TargetSpec::HybridRosenbrock {
            n1: 4,
            n2: 2,
            mu: 1.0,
            a: 30.0,
            b: RosenbrockCoefficients::Uniform(20.0),
        }
    }

    pub fn reference_funnel() -> Self {
        TargetSpec::Funnel {
            data: None,
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }

    pub fn reference_mixture() -> Self {
        TargetSpec::GaussianMixture {
            means: vec![
                vec![-4.0, -4.0],
                vec![4.0, -4.0],
                vec![-4.0, 4.0],
                vec![4.0, 4.0],
            ],
            covs: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 4],
            weights: vec![0.337, 0.050, 0.284, 0.328],
        }
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidParameter("matrix rows must be nonempty and equal length".into()));
    }
    let m = rows[0].len();
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}
