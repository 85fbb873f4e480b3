//! Chain diagnostics: ergodic averages, batch-means asymptotic variance,
//! kernelized Stein discrepancy, multi-chain MSE studies, step-size bias
//! sweeps and Wasserstein bound calculators.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_sqrt;
use crate::samplers::{run_chain_streaming, SamplerConfig};
use crate::targets::LogDensity;

pub const MIN_BATCH_MEANS_LENGTH: usize = 100;

type Evaluator = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Scalar observable φ(y).
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    /// Required dimension, if any.
    pub arity: Option<usize>,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .finish()
    }
}

impl TestFunction {
    pub fn new<F>(name: impl Into<String>, arity: Option<usize>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TestFunction {
            name: name.into(),
            arity,
            eval: Arc::new(f),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.eval)(y)
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.arity {
            Some(a) if a != d => Err(Error::DimensionMismatch { expected: a, got: d }),
            _ => Ok(()),
        }
    }

    /// Looks up a named observable.
    ///
    /// Known names: `sum` (Σyᵢ), `sum_sq` (Σyᵢ²), `sum_sq_plus_sum`
    /// (Σyᵢ² + yᵢ), `exp_y2` (e^{y₂}), `constant`, and `y<i>` / `y<i>_sq` for a
    /// single one-based coordinate.
    pub fn by_name(name: &str) -> Result<Self> {
        let f = match name {
            "sum" => TestFunction::new(name, None, |y| y.iter().sum()),
            "sum_sq" => TestFunction::new(name, None, |y| y.iter().map(|v| v * v).sum()),
            "sum_sq_plus_sum" => {
                TestFunction::new(name, None, |y| y.iter().map(|v| v * v + v).sum())
            }
            "exp_y2" => TestFunction::new(name, Some(2), |y| y[1].exp()),
            "constant" => TestFunction::new(name, None, |_| 1.0),
            _ => {
                let coord = name.strip_prefix('y').and_then(|rest| {
                    let (idx, sq) = match rest.strip_suffix("_sq") {
                        Some(i) => (i, true),
                        None => (rest, false),
                    };
                    idx.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| (i - 1, sq))
                });
                match coord {
                    Some((i, false)) => TestFunction::new(name, None, move |y| y[i]),
                    Some((i, true)) => TestFunction::new(name, None, move |y| y[i] * y[i]),
                    None => {
                        return Err(Error::Config(format!("unknown test function {name:?}")))
                    }
                }
            }
        };
        Ok(f)
    }

    pub fn registry_names() -> &'static [&'static str] {
        &["sum", "sum_sq", "sum_sq_plus_sum", "exp_y2", "constant", "y<i>", "y<i>_sq"]
    }
}

/// φ evaluated on rows `burn_in..` of a row-major chain.
pub fn phi_series(states: &[f64], dim: usize, phi: &TestFunction, burn_in: usize) -> Vec<f64> {
    states
        .chunks_exact(dim)
        .skip(burn_in)
        .map(|y| phi.eval(y))
        .collect()
}

fn retained(states: &[f64], dim: usize, burn_in: usize) -> Result<usize> {
    let k = states.len() / dim;
    if burn_in >= k {
        return Err(Error::ChainTooShort {
            needed: burn_in + 1,
            got: k,
        });
    }
    Ok(k - burn_in)
}

/// (1/(K − burn_in)) Σ_{k ≥ burn_in} φ(y_k).
pub fn ergodic_average(states: &[f64], dim: usize, phi: &TestFunction, burn_in: usize) -> Result<f64> {
    let n = retained(states, dim, burn_in)?;
    let sum: f64 = states
        .chunks_exact(dim)
        .skip(burn_in)
        .map(|y| phi.eval(y))
        .sum();
    Ok(sum / n as f64)
}

/// Streaming batch-means estimator for a series of known length K:
/// M = ⌊√K⌋ batches of size B = ⌊K/M⌋; trailing values beyond M·B only
/// enter the overall mean.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_size: usize,
    batches: usize,
    count: usize,
    total: f64,
    current: f64,
    means: Vec<f64>,
}

impl BatchMeans {
    pub fn new(len: usize) -> Result<Self> {
        if len < MIN_BATCH_MEANS_LENGTH {
            return Err(Error::ChainTooShort {
                needed: MIN_BATCH_MEANS_LENGTH,
                got: len,
            });
        }
        let batches = (len as f64).sqrt().floor() as usize;
        Ok(BatchMeans {
            batch_size: len / batches,
            batches,
            count: 0,
            total: 0.0,
            current: 0.0,
            means: Vec::with_capacity(batches),
        })
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.total += v;
        if self.means.len() < self.batches {
            self.current += v;
            if self.count % self.batch_size == 0 {
                self.means.push(self.current / self.batch_size as f64);
                self.current = 0.0;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.total / self.count as f64
    }

    /// B · sample variance of the batch means.
    pub fn avar(&self) -> Result<f64> {
        let m = self.means.len();
        if m < 2 {
            return Err(Error::ChainTooShort {
                needed: MIN_BATCH_MEANS_LENGTH,
                got: self.count,
            });
        }
        let grand = self.means.iter().sum::<f64>() / m as f64;
        let var = self.means.iter().map(|b| (b - grand).powi(2)).sum::<f64>() / (m - 1) as f64;
        Ok(self.batch_size as f64 * var)
    }
}

pub fn batch_means_avar_series(series: &[f64]) -> Result<f64> {
    let mut bm = BatchMeans::new(series.len())?;
    series.iter().for_each(|&v| bm.push(v));
    bm.avar()
}

/// Batch-means asymptotic variance of φ along a chain.
pub fn batch_means_avar(states: &[f64], dim: usize, phi: &TestFunction, burn_in: usize) -> Result<f64> {
    retained(states, dim, burn_in)?;
    batch_means_avar_series(&phi_series(states, dim, phi, burn_in))
}

/// Inverse multiquadric base kernel k(x, y) = (c² + ‖x − y‖²)^β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImqKernel {
    pub c: f64,
    pub beta: f64,
}

impl Default for ImqKernel {
    fn default() -> Self {
        ImqKernel { c: 1.0, beta: -0.5 }
    }
}

impl ImqKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.beta < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "IMQ kernel needs c > 0 and beta < 0 (got c = {}, beta = {})",
                self.c, self.beta
            )));
        }
        Ok(())
    }

    /// Langevin Stein kernel k₀(x, y) given the scores s(x), s(y).
    pub fn stein(&self, x: &[f64], y: &[f64], sx: &[f64], sy: &[f64]) -> f64 {
        let d = x.len();
        let mut r2 = 0.0;
        let mut r_ds = 0.0;
        let mut ss = 0.0;
        for i in 0..d {
            let r = x[i] - y[i];
            r2 += r * r;
            r_ds += r * (sy[i] - sx[i]);
            ss += sx[i] * sy[i];
        }
        let q = self.c * self.c + r2;
        let b = self.beta;
        let qb1 = q.powf(b - 1.0);
        let qb = qb1 * q;
        let div = -2.0 * b * (d as f64 * qb1 + 2.0 * (b - 1.0) * qb1 / q * r2);
        div + 2.0 * b * qb1 * r_ds + qb * ss
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Stein-kernel double sum. `u_statistic` drops the diagonal and normalizes
/// by n(n−1); otherwise the V-statistic (1/n²)ΣΣ k₀ is returned.
pub fn ksd_squared<S>(points: &[f64], dim: usize, score: S, kernel: &ImqKernel, u_statistic: bool) -> Result<f64>
where
    S: Fn(&[f64], &mut [f64]) + Sync,
{
    kernel.validate()?;
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidParameter("points must be an n×d array".into()));
    }
    let n = points.len() / dim;
    if n == 0 || (u_statistic && n < 2) {
        return Err(Error::InvalidParameter("too few points for KSD".into()));
    }
    let mut scores = vec![0.0; points.len()];
    scores
        .par_chunks_mut(dim)
        .zip(points.par_chunks(dim))
        .for_each(|(s, x)| score(x, s));
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScore(i / dim));
    }
    // row i contributes k₀(i,i) + 2 Σ_{j>i} k₀(i,j)
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &points[i * dim..(i + 1) * dim];
            let si = &scores[i * dim..(i + 1) * dim];
            let mut off = 0.0;
            for j in i + 1..n {
                off += kernel.stein(
                    xi,
                    &points[j * dim..(j + 1) * dim],
                    si,
                    &scores[j * dim..(j + 1) * dim],
                );
            }
            let diag = if u_statistic { 0.0 } else { kernel.stein(xi, xi, si, si) };
            diag + 2.0 * off
        })
        .collect();
    let total = pairwise_sum(&rows);
    let norm = if u_statistic {
        (n * (n - 1)) as f64
    } else {
        (n * n) as f64
    };
    Ok(total / norm)
}

/// Kernelized Stein discrepancy (square root of the V-statistic).
pub fn ksd<S>(points: &[f64], dim: usize, score: S, kernel: &ImqKernel) -> Result<f64>
where
    S: Fn(&[f64], &mut [f64]) + Sync,
{
    Ok(ksd_squared(points, dim, score, kernel, false)?.max(0.0).sqrt())
}

/// KSD against a target's score.
pub fn ksd_for_target(points: &[f64], target: &dyn LogDensity, kernel: &ImqKernel) -> Result<f64> {
    ksd(points, target.dim(), |y, s| target.grad_log_density_into(y, s), kernel)
}

/// Evenly spaced subsample of `count` rows from rows `burn_in..`.
pub fn subsample_rows(states: &[f64], dim: usize, burn_in: usize, count: usize) -> Vec<f64> {
    let k = states.len() / dim;
    if burn_in >= k || count == 0 {
        return Vec::new();
    }
    let avail = k - burn_in;
    let count = count.min(avail);
    let mut out = Vec::with_capacity(count * dim);
    for i in 0..count {
        let r = burn_in + (i * avail) / count;
        out.extend_from_slice(&states[r * dim..(r + 1) * dim]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub length: usize,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsdPoint {
    pub samples: usize,
    pub ksd: f64,
}

/// Per-chain raw statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain_id: u64,
    pub seed: u64,
    pub mean: Option<f64>,
    pub avar: Option<f64>,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: String,
    pub step_size: f64,
    pub phi: String,
    pub truth: Option<f64>,
    pub n_chains: usize,
    pub diverged_chains: usize,
    /// Mean over non-diverged chains of the per-chain ergodic average.
    pub mean: Option<f64>,
    /// Mean over non-diverged chains of the batch-means AVar.
    pub avar: Option<f64>,
    pub mse: Vec<MseRow>,
    pub ksd: Vec<KsdPoint>,
    pub chains: Vec<ChainStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub burn_in: usize,
    pub n_chains: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub metadata: ReportMetadata,
    pub entries: Vec<SchemeReport>,
}

impl DiagnosticsReport {
    /// Largest |MSE − (bias² + variance)| across all tables.
    pub fn mse_identity_defect(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.mse.iter())
            .map(|r| (r.mse - (r.bias * r.bias + r.variance)).abs())
            .fold(0.0, f64::max)
    }
}

/// Log-spaced chain lengths ending at `k`, starting near k/100.
pub fn mse_checkpoints(k: usize, count: usize) -> Vec<usize> {
    let lo = (k as f64 / 100.0).max(1.0);
    let hi = k as f64;
    let count = count.max(1);
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            (lo * (hi / lo).powf(t)).round() as usize
        })
        .map(|v| v.clamp(1, k))
        .collect();
    out.dedup();
    out
}

/// Bias, variance and MSE of per-chain running averages against `truth`.
/// `averages[c][i]` is chain c's average over the first `lengths[i]` states.
pub fn mse_table(averages: &[Vec<f64>], lengths: &[usize], truth: f64) -> Vec<MseRow> {
    let n = averages.len() as f64;
    lengths
        .iter()
        .enumerate()
        .map(|(i, &length)| {
            let mean = averages.iter().map(|a| a[i]).sum::<f64>() / n;
            let bias = mean - truth;
            let variance = averages.iter().map(|a| (a[i] - mean).powi(2)).sum::<f64>() / n;
            let mse = averages.iter().map(|a| (a[i] - truth).powi(2)).sum::<f64>() / n;
            MseRow {
                length,
                bias,
                variance,
                mse,
            }
        })
        .collect()
}

/// Summarizes already-computed chains (row-major states, post burn-in
/// observables) for one scheme.
pub fn summarize_chains(
    scheme: &str,
    step_size: f64,
    phi: &TestFunction,
    truth: Option<f64>,
    chains: &[(u64, u64, Option<usize>, Vec<f64>)],
    checkpoints: usize,
) -> SchemeReport {
    let mut stats = Vec::with_capacity(chains.len());
    let mut good: Vec<&Vec<f64>> = Vec::new();
    for (id, seed, diverged_at, series) in chains {
        let ok = diverged_at.is_none() && !series.is_empty();
        let mean = (!series.is_empty()).then(|| series.iter().sum::<f64>() / series.len() as f64);
        let avar = batch_means_avar_series(series).ok();
        stats.push(ChainStats {
            chain_id: *id,
            seed: *seed,
            mean,
            avar,
            diverged_at: *diverged_at,
        });
        if ok {
            good.push(series);
        }
    }
    let mean = (!good.is_empty())
        .then(|| good.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).sum::<f64>() / good.len() as f64);
    let avars: Vec<f64> = stats
        .iter()
        .filter(|s| s.diverged_at.is_none())
        .filter_map(|s| s.avar)
        .collect();
    let avar = (!avars.is_empty()).then(|| avars.iter().sum::<f64>() / avars.len() as f64);
    let mse = match truth {
        Some(truth) if !good.is_empty() => {
            let len = good.iter().map(|s| s.len()).min().unwrap_or(0);
            let lengths = mse_checkpoints(len, checkpoints);
            let averages: Vec<Vec<f64>> = good
                .iter()
                .map(|s| {
                    let mut out = Vec::with_capacity(lengths.len());
                    let mut acc = 0.0;
                    let mut next = 0;
                    for (i, v) in s.iter().enumerate() {
                        acc += v;
                        while next < lengths.len() && lengths[next] == i + 1 {
                            out.push(acc / (i + 1) as f64);
                            next += 1;
                        }
                    }
                    out
                })
                .collect();
            mse_table(&averages, &lengths, truth)
        }
        _ => Vec::new(),
    };
    SchemeReport {
        scheme: scheme.to_string(),
        step_size,
        phi: phi.name.clone(),
        truth,
        n_chains: chains.len(),
        diverged_chains: chains.iter().filter(|c| c.2.is_some()).count(),
        mean,
        avar,
        mse,
        ksd: Vec::new(),
        chains: stats,
    }
}

/// Settings shared by [`mse_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    pub n_chains: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

fn default_checkpoints() -> usize {
    12
}

/// Runs `n_chains` independent chains per configuration and tabulates the
/// bias, variance and MSE of the ergodic average of φ against `truth`.
/// Diverged chains are counted and excluded.
pub fn mse_study(
    target: &dyn LogDensity,
    configs: &[SamplerConfig],
    y0: &[f64],
    phi: &TestFunction,
    truth: f64,
    settings: &StudySettings,
) -> Result<DiagnosticsReport> {
    phi.check_dim(target.dim())?;
    if settings.burn_in >= settings.steps {
        return Err(Error::InvalidParameter("burn-in must be shorter than the chain".into()));
    }
    let mut entries = Vec::with_capacity(configs.len());
    for config in configs {
        config.validate(target.dim())?;
        let runs: Vec<Result<(u64, u64, Option<usize>, Vec<f64>)>> = (0..settings.n_chains as u64)
            .into_par_iter()
            .map(|id| {
                let mut series = Vec::with_capacity(settings.steps + 1 - settings.burn_in);
                let s = run_chain_streaming(target, config, y0, settings.steps, settings.seed, id, |k, y| {
                    if k >= settings.burn_in {
                        series.push(phi.eval(y));
                    }
                })?;
                Ok((id, settings.seed, s.diverged_at, series))
            })
            .collect();
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        entries.push(summarize_chains(
            config.scheme.name(),
            config.step_size,
            phi,
            Some(truth),
            &runs,
            settings.checkpoints,
        ));
    }
    Ok(DiagnosticsReport {
        metadata: ReportMetadata {
            seeds: vec![settings.seed],
            steps: settings.steps,
            burn_in: settings.burn_in,
            n_chains: settings.n_chains,
            notes: Vec::new(),
        },
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub h: f64,
    pub steps: usize,
    pub estimate: Option<f64>,
    /// ê(φ, h) = estimate − truth.
    pub bias: Option<f64>,
    /// ê / h.
    pub ratio: Option<f64>,
    /// Batch-means standard error of ê / h.
    pub ratio_stderr: Option<f64>,
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSweep {
    pub scheme: String,
    pub phi: String,
    pub truth: f64,
    pub time: f64,
    pub burn_in_time: f64,
    pub seed: u64,
    pub rows: Vec<BiasRow>,
    /// λ̂₁ = −mean(ê/h) over non-diverged rows.
    pub lambda_hat: Option<f64>,
    pub lambda_stderr: Option<f64>,
}

/// One chain of physical time `time` per step size; ê/h per row and
/// λ̂₁ = −mean(ê/h) following e(φ, h) = −λ₁h.
pub fn bias_sweep(
    target: &dyn LogDensity,
    template: &SamplerConfig,
    y0: &[f64],
    phi: &TestFunction,
    truth: f64,
    h_list: &[f64],
    time: f64,
    burn_in_time: f64,
    seed: u64,
) -> Result<BiasSweep> {
    phi.check_dim(target.dim())?;
    if !(time > 0.0) || !(burn_in_time >= 0.0) {
        return Err(Error::InvalidParameter("sweep times must be positive".into()));
    }
    let rows: Vec<Result<BiasRow>> = h_list
        .par_iter()
        .enumerate()
        .map(|(i, &h)| {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!("step size must be positive (got {h})")));
            }
            let mut config = template.clone();
            config.step_size = h;
            let steps = (time / h).round() as usize;
            let burn = (burn_in_time / h).round() as usize;
            let mut bm = BatchMeans::new(steps)?;
            let summary = run_chain_streaming(target, &config, y0, burn + steps, seed, i as u64, |k, y| {
                if k > burn {
                    bm.push(phi.eval(y));
                }
            })?;
            if summary.diverged_at.is_some() || bm.count() < steps {
                return Ok(BiasRow {
                    h,
                    steps,
                    estimate: None,
                    bias: None,
                    ratio: None,
                    ratio_stderr: None,
                    diverged_at: summary.diverged_at,
                });
            }
            let estimate = bm.mean();
            let bias = estimate - truth;
            let se = (bm.avar()? / steps as f64).sqrt();
            Ok(BiasRow {
                h,
                steps,
                estimate: Some(estimate),
                bias: Some(bias),
                ratio: Some(bias / h),
                ratio_stderr: Some(se / h),
                diverged_at: None,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let ok: Vec<&BiasRow> = rows.iter().filter(|r| r.ratio.is_some()).collect();
    let (lambda_hat, lambda_stderr) = if ok.is_empty() {
        (None, None)
    } else {
        let n = ok.len() as f64;
        let mean = ok.iter().map(|r| r.ratio.unwrap()).sum::<f64>() / n;
        let se = ok.iter().map(|r| r.ratio_stderr.unwrap().powi(2)).sum::<f64>().sqrt() / n;
        (Some(-mean), Some(se))
    };
    Ok(BiasSweep {
        scheme: template.scheme.name().to_string(),
        phi: phi.name.clone(),
        truth,
        time,
        burn_in_time,
        seed,
        rows,
        lambda_hat,
        lambda_stderr,
    })
}

/// Contraction constant κ = 2mL/(m + L).
pub fn kappa(m: f64, l: f64) -> f64 {
    2.0 * m * l / (m + l)
}

/// Discretization constant C = (2L²d/κ)[h(κ⁻¹ + h)](2 + L²h/m + L²h²/6).
pub fn discretization_constant(m: f64, l: f64, h: f64, d: usize) -> f64 {
    let k = kappa(m, l);
    let l2 = l * l;
    (2.0 * l2 * d as f64 / k) * (h * (1.0 / k + h)) * (2.0 + l2 * h / m + l2 * h * h / 6.0)
}

/// W₂² bound after k steps of ULA on a density whose pushforward is m-convex
/// and L-smooth, for a map with strong monotonicity ρ:
/// (1/ρ²)(1 − κh/2)ᵏ(2‖y − y*‖² + 2d/m − C) + C/ρ².
pub fn wasserstein_bound(m: f64, l: f64, h: f64, k: u64, d: usize, dist0_sq: f64, rho: f64) -> Result<f64> {
    if !(m > 0.0) || !(l >= m) || !l.is_finite() {
        return Err(Error::InvalidParameter(format!("need 0 < m ≤ L (got m = {m}, L = {l})")));
    }
    if !(h > 0.0) || h > 1.0 / (m + l) {
        return Err(Error::InvalidParameter(format!(
            "step size must satisfy 0 < h ≤ 1/(m+L) = {} (got {h})",
            1.0 / (m + l)
        )));
    }
    if !(rho > 0.0) || !(dist0_sq >= 0.0) || d == 0 {
        return Err(Error::InvalidParameter("need rho > 0, dist0_sq ≥ 0, d ≥ 1".into()));
    }
    let c = discretization_constant(m, l, h, d);
    let rate = 1.0 - kappa(m, l) * h / 2.0;
    let r2 = rho * rho;
    Ok(rate.powf(k as f64) * (2.0 * dist0_sq + 2.0 * d as f64 / m - c) / r2 + c / r2)
}

/// Squared 2-Wasserstein distance between two Gaussians:
/// ‖μ₁ − μ₂‖² + tr(C₁ + C₂ − 2(C₂^{1/2} C₁ C₂^{1/2})^{1/2}).
pub fn gaussian_w2(mean1: &[f64], cov1: &DMatrix<f64>, mean2: &[f64], cov2: &DMatrix<f64>) -> Result<f64> {
    let d = mean1.len();
    if mean2.len() != d || cov1.shape() != (d, d) || cov2.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mean2.len(),
        });
    }
    let r2 = sym_sqrt(cov2)?;
    sym_sqrt(cov1)?;
    let inner = &r2 * cov1 * &r2;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = sym_sqrt(&inner)?;
    let shift: f64 = mean1.iter().zip(mean2).map(|(a, b)| (a - b).powi(2)).sum();
    let w2 = shift + cov1.trace() + cov2.trace() - 2.0 * cross.trace();
    Ok(w2.max(0.0))
}

/// Sample mean and covariance (1/n) of row-major points.
pub fn sample_mean_cov(points: &[f64], dim: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = (points.len() / dim) as f64;
    let mut mean = DVector::zeros(dim);
    for row in points.chunks_exact(dim) {
        mean += DVector::from_column_slice(row);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for row in points.chunks_exact(dim) {
        let c = DVector::from_column_slice(row) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n;
    (mean.as_slice().to_vec(), cov)
}

#[cfg(test)]
mod tests;
