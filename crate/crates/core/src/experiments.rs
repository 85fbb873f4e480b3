//! Experiment configurations, presets and orchestration.
//!
//! An [`ExperimentConfig`] fully determines an experiment: running it twice
//! produces byte-identical output files. Chains within a replicate use stream
//! ids `0..n_chains` of the replicate seed `seed + r`; map-training chains use
//! the reserved stream [`TRAINING_STREAM`] of the master seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bias_sweep, ksd_squared, subsample_rows, summarize_chains, BiasSweep, ImqKernel, SchemeReport,
    TestFunction,
};
use crate::error::{Error, Result};
use crate::map_learning::{train_map_adaptive, train_map_with_report, MapTrainingSpec};

/// Share of the samples held out when choosing a map order.
const ORDER_HOLDOUT: f64 = 0.2;
use crate::plot::{Plot, Style};
use crate::samplers::{
    rotation_skew, run_chain_streaming, write_chain_csv, Chain, FunnelFisherMetric, ImplicitSolverOptions,
    Metric, SamplerConfig, Scheme,
};
use crate::targets::{funnel_dataset, matrix_from_rows, LogDensity, TargetDensity, TargetSpec};
use crate::transport::{load_map, map_to_json, PushforwardDensity, Transport, TransportMap};

/// Noise stream reserved for chains that generate map-training samples.
pub const TRAINING_STREAM: u64 = 1 << 32;

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 4] = ["banana-bias", "funnel", "rosenbrock", "mixture"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub target: TargetSpec,
    /// Defaults to T(0) for targets with an exact map, (mean X, log sd X) for
    /// the funnel and the origin otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub map: MapSource,
    #[serde(default)]
    pub schemes: Vec<SchemeRun>,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggles,
    #[serde(default)]
    pub study: Study,
    pub seed: u64,
    /// Independent repetitions with seeds `seed, seed + 1, ...`.
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleInfo>,
}

fn one() -> usize {
    1
}

/// Run-length scaling relative to the reference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleInfo {
    pub desk_scale: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    None {},
    /// The target's analytic normalizing map.
    Exact {},
    File {
        path: String,
    },
    Train {
        #[serde(default)]
        spec: MapTrainingSpec,
        samples: TrainingSamples,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainingSamples {
    /// Every `thin`-th state of one ULA chain after `burn_in` steps.
    Ula {
        h: f64,
        count: usize,
        #[serde(default = "one")]
        thin: usize,
        #[serde(default)]
        burn_in: usize,
    },
    /// Exact draws (see [`TargetSpec::exact_samples`]).
    Exact { count: usize },
    /// A chain CSV; every row is used.
    File { path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    FunnelFisher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeRun {
    pub scheme: Scheme,
    /// Unique name used in tables and file names; defaults to the scheme name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Step size (ignored by bias sweeps, which use their own list).
    #[serde(default)]
    pub h: f64,
    /// Number of steps K (ignored by bias sweeps).
    #[serde(default)]
    pub steps: usize,
    #[serde(default = "one")]
    pub n_chains: usize,
    /// Steps discarded before statistics are accumulated.
    #[serde(default)]
    pub burn_in: usize,
    /// Stored-state thinning for chain files and KSD.
    #[serde(default = "one")]
    pub thin: usize,
    /// Rotation D = δ[[0,1],[−1,0]] (two-dimensional targets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew_delta: Option<f64>,
    /// Full skew-symmetric D, row by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricSpec>,
    #[serde(default)]
    pub implicit_solver: ImplicitSolverOptions,
}

impl SchemeRun {
    pub fn new(scheme: Scheme, h: f64, steps: usize) -> Self {
        SchemeRun {
            scheme,
            label: None,
            h,
            steps,
            n_chains: 1,
            burn_in: 0,
            thin: 1,
            skew_delta: None,
            skew: None,
            metric: None,
            implicit_solver: ImplicitSolverOptions::default(),
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.scheme.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

impl TestFunctionSpec {
    pub fn new(name: &str, truth: Option<f64>) -> Self {
        TestFunctionSpec {
            name: name.into(),
            truth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsToggles {
    /// MSE/bias/variance tables (only for test functions with a truth).
    pub mse: bool,
    pub checkpoints: usize,
    pub ksd: bool,
    /// Retained states per chain used for KSD (evenly subsampled).
    pub ksd_points: usize,
    pub kernel: ImqKernel,
    pub ksd_u_statistic: bool,
    pub save_chains: bool,
    pub svg: bool,
}

impl Default for DiagnosticsToggles {
    fn default() -> Self {
        DiagnosticsToggles {
            mse: true,
            checkpoints: 12,
            ksd: false,
            ksd_points: 1000,
            kernel: ImqKernel::default(),
            ksd_u_statistic: false,
            save_chains: true,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Study {
    /// Independent chains per scheme with ergodic averages, batch-means
    /// AVar, MSE tables and optional KSD.
    Chains {},
    /// Asymptotic-bias sweep over step sizes with the first test function.
    BiasSweep {
        h_list: Vec<f64>,
        /// Physical time T per step size (K = T/h steps).
        time: f64,
        burn_in_time: f64,
    },
    /// Maps trained on exact samples of several sizes; pushforward densities
    /// and the minimum pushforward log-density between mode images.
    MixtureMaps {
        sizes: Vec<usize>,
        #[serde(default)]
        spec: MapTrainingSpec,
        /// When set, the total order is chosen per fit from `1..=max_order`
        /// by held-out likelihood and `spec.total_order` is ignored.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_order: Option<usize>,
        grid_half_width: f64,
        grid_points: usize,
        segment_points: usize,
    },
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::None {}
    }
}

impl Default for Study {
    fn default() -> Self {
        Study::Chains {}
    }
}

impl Study {
    pub fn kind(&self) -> &'static str {
        match self {
            Study::Chains {} => "chains",
            Study::BiasSweep { .. } => "bias_sweep",
            Study::MixtureMaps { .. } => "mixture_maps",
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn path_safe(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !s.starts_with('.')
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with a trailing newline (the echoed `config.json`).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    /// Fills defaults that depend on the target (currently the initial state).
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if out.initial_state.is_none() {
            let target = self.target.build()?;
            out.initial_state = Some(default_initial_state(&self.target, &target)?);
        }
        Ok(out)
    }

    /// Structural checks that do not require running anything.
    pub fn validate(&self) -> Result<()> {
        if !path_safe(&self.name) {
            return Err(config_err(format!("invalid experiment name {:?}", self.name)));
        }
        if self.replicates == 0 {
            return Err(config_err("replicates must be at least 1"));
        }
        let target = self.target.build().map_err(|e| config_err(e.to_string()))?;
        let d = target.dim;
        if let Some(y0) = &self.initial_state {
            if y0.len() != d || y0.iter().any(|v| !v.is_finite()) {
                return Err(config_err(format!("initial_state must hold {d} finite values")));
            }
        }
        let tfs = self.test_functions()?;
        for tf in &tfs {
            tf.check_dim(d).map_err(|e| config_err(e.to_string()))?;
        }
        let dg = &self.diagnostics;
        if dg.checkpoints == 0 {
            return Err(config_err("diagnostics.checkpoints must be at least 1"));
        }
        if dg.ksd {
            dg.kernel.validate().map_err(|e| config_err(e.to_string()))?;
            if dg.ksd_points == 0 {
                return Err(config_err("diagnostics.ksd_points must be at least 1"));
            }
        }
        match &self.map {
            MapSource::Exact {} if target.exact_map.is_none() => {
                return Err(config_err(format!("target {} has no exact map", target.name)))
            }
            MapSource::Train { spec, samples } => {
                spec.validate().map_err(|e| config_err(e.to_string()))?;
                match samples {
                    TrainingSamples::Ula { h, count, thin, .. } => {
                        if !(*h > 0.0) || *count == 0 || *thin == 0 {
                            return Err(config_err("ULA training samples need h > 0, count > 0 and thin > 0"));
                        }
                    }
                    TrainingSamples::Exact { count } if *count == 0 => {
                        return Err(config_err("training sample count must be positive"))
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        let mut labels = std::collections::BTreeSet::new();
        for run in &self.schemes {
            let label = run.label();
            if !path_safe(&label) {
                return Err(config_err(format!("invalid scheme label {label:?}")));
            }
            if !labels.insert(label.clone()) {
                return Err(config_err(format!("duplicate scheme label {label:?}; set distinct labels")));
            }
            if run.scheme.needs_map() && matches!(self.map, MapSource::None {}) {
                return Err(config_err(format!("scheme {} requires a map source", run.scheme)));
            }
            if run.metric.is_some() != (run.scheme == Scheme::Rmld) {
                return Err(config_err("a metric must be given exactly for rmld schemes"));
            }
            if run.skew.is_some() && run.skew_delta.is_some() {
                return Err(config_err("give either skew or skew_delta, not both"));
            }
            if run.n_chains == 0 || run.thin == 0 {
                return Err(config_err(format!("{label}: n_chains and thin must be positive")));
            }
            if matches!(self.study, Study::Chains {}) {
                if run.steps == 0 {
                    return Err(config_err(format!("{label}: steps must be at least 1")));
                }
                if run.burn_in >= run.steps {
                    return Err(config_err(format!("{label}: burn_in must be smaller than steps")));
                }
                if !(run.h >= 0.0) || !run.h.is_finite() {
                    return Err(config_err(format!("{label}: h must be nonnegative and finite")));
                }
            }
        }
        match &self.study {
            Study::Chains {} => {
                if self.schemes.is_empty() {
                    return Err(config_err("at least one scheme is required"));
                }
            }
            Study::BiasSweep {
                h_list,
                time,
                burn_in_time,
            } => {
                if self.schemes.is_empty() {
                    return Err(config_err("at least one scheme is required"));
                }
                if h_list.is_empty() || h_list.iter().any(|h| !(*h > 0.0)) {
                    return Err(config_err("h_list must hold positive step sizes"));
                }
                if !(*time > 0.0) || !(*burn_in_time >= 0.0) {
                    return Err(config_err("time must be positive and burn_in_time nonnegative"));
                }
                if tfs.first().and_then(|_| self.test_functions[0].truth).is_none() {
                    return Err(config_err("bias sweeps need a first test function with a truth"));
                }
            }
            Study::MixtureMaps {
                sizes,
                spec,
                max_order,
                grid_half_width,
                grid_points,
                segment_points,
            } => {
                if matches!(max_order, Some(m) if *m == 0 || *m > 6) {
                    return Err(config_err("max_order must be between 1 and 6"));
                }
                if !matches!(self.target, TargetSpec::GaussianMixture { .. }) {
                    return Err(config_err("mixture_maps requires a gaussian_mixture target"));
                }
                if d != 2 {
                    return Err(config_err("mixture_maps requires a two-dimensional mixture"));
                }
                spec.validate().map_err(|e| config_err(e.to_string()))?;
                if sizes.is_empty() || sizes.contains(&0) {
                    return Err(config_err("sizes must be positive"));
                }
                if !(*grid_half_width > 0.0) || *grid_points < 2 || *segment_points < 2 {
                    return Err(config_err("grid_half_width > 0, grid_points >= 2, segment_points >= 2"));
                }
            }
        }
        Ok(())
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction>> {
        self.test_functions
            .iter()
            .map(|t| TestFunction::by_name(&t.name))
            .collect()
    }
}

/// Default chain start for a target.
pub fn default_initial_state(spec: &TargetSpec, target: &TargetDensity) -> Result<Vec<f64>> {
    if let Some(map) = &target.exact_map {
        return map.inverse(&vec![0.0; target.dim]);
    }
    if let TargetSpec::Funnel { data, .. } = spec {
        let data = data.clone().unwrap_or_else(funnel_dataset);
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        // a single datum has no spread; start at σ = 1
        let gamma = if var > 0.0 { 0.5 * var.ln() } else { 0.0 };
        return Ok(vec![mean, gamma]);
    }
    Ok(vec![0.0; target.dim])
}

/// Builds a scheme run's sampler configuration.
pub fn sampler_config(
    run: &SchemeRun,
    target: &TargetDensity,
    map: Option<&Arc<TransportMap>>,
) -> Result<SamplerConfig> {
    let mut c = SamplerConfig::new(run.scheme, run.h);
    c.implicit_solver = run.implicit_solver;
    if run.scheme.needs_map() {
        let map = map.ok_or_else(|| config_err(format!("scheme {} requires a map", run.scheme)))?;
        c = c.with_shared_map(map.clone());
    }
    if let Some(delta) = run.skew_delta {
        c = c.with_skew(rotation_skew(delta));
    }
    if let Some(rows) = &run.skew {
        c = c.with_skew(matrix_from_rows(rows)?);
    }
    if let Some(MetricSpec::FunnelFisher) = run.metric {
        let m: Arc<dyn Metric> = Arc::new(FunnelFisherMetric::for_target(target)?);
        c = c.with_metric(m);
    }
    c.validate(target.dim)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub source: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_nll: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

/// Resolves the configured map, training it if requested. Also returns the
/// training samples when they were generated.
pub fn build_map(
    config: &ExperimentConfig,
    target: &TargetDensity,
) -> Result<(Option<Arc<TransportMap>>, Option<MapSummary>, Vec<Vec<f64>>)> {
    match &config.map {
        MapSource::None {} => Ok((None, None, Vec::new())),
        MapSource::Exact {} => {
            let map = target
                .exact_map
                .clone()
                .ok_or_else(|| config_err(format!("target {} has no exact map", target.name)))?;
            let summary = MapSummary {
                source: "exact".into(),
                kind: map.kind().into(),
                training_samples: None,
                final_nll: None,
                converged: None,
            };
            Ok((Some(Arc::new(map)), Some(summary), Vec::new()))
        }
        MapSource::File { path } => {
            let map = load_map(path).map_err(|e| config_err(format!("map file {path}: {e}")))?;
            if map.dim() != target.dim {
                return Err(config_err(format!(
                    "map dimension {} does not match target dimension {}",
                    map.dim(),
                    target.dim
                )));
            }
            let summary = MapSummary {
                source: "file".into(),
                kind: map.kind().into(),
                training_samples: None,
                final_nll: None,
                converged: None,
            };
            Ok((Some(Arc::new(map)), Some(summary), Vec::new()))
        }
        MapSource::Train { spec, samples } => {
            let samples = training_samples(config, target, samples)?;
            let (map, report) = train_map_with_report(&samples, spec)?;
            let summary = MapSummary {
                source: "train".into(),
                kind: map.kind().into(),
                training_samples: Some(samples.len()),
                final_nll: Some(report.final_nll),
                converged: Some(report.components.iter().all(|c| c.converged)),
            };
            Ok((Some(Arc::new(map)), Some(summary), samples))
        }
    }
}

fn training_samples(
    config: &ExperimentConfig,
    target: &TargetDensity,
    source: &TrainingSamples,
) -> Result<Vec<Vec<f64>>> {
    match source {
        TrainingSamples::Ula {
            h,
            count,
            thin,
            burn_in,
        } => {
            let y0 = match &config.initial_state {
                Some(y) => y.clone(),
                None => default_initial_state(&config.target, target)?,
            };
            let c = SamplerConfig::new(Scheme::Ula, *h);
            let k = burn_in + count * thin;
            let mut out = Vec::with_capacity(*count);
            let summary = run_chain_streaming(target, &c, &y0, k, config.seed, TRAINING_STREAM, |step, y| {
                if step > *burn_in && (step - burn_in) % thin == 0 {
                    out.push(y.to_vec());
                }
            })?;
            if let Some(at) = summary.diverged_at {
                return Err(Error::Step(format!("training chain diverged at step {at}")));
            }
            Ok(out)
        }
        TrainingSamples::Exact { count } => config.target.exact_samples(*count, config.seed),
        TrainingSamples::File { path } => {
            let (_, states, d) = crate::samplers::load_chain_csv(path)
                .map_err(|e| config_err(format!("training samples {path}: {e}")))?;
            if d != target.dim {
                return Err(config_err(format!("training samples have dimension {d}, target {}", target.dim)));
            }
            Ok(states.chunks(d).map(|r| r.to_vec()).collect())
        }
    }
}

/// Per-chain extremes of the retained states (after burn-in, before any
/// divergence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainExtremes {
    pub chain_id: u64,
    pub retained: usize,
    pub diverged_at: Option<usize>,
    pub min: Option<Vec<f64>>,
    pub max: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub scheme: String,
    pub h: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub replicate: usize,
    pub seed: u64,
    pub diverged_chains: usize,
    pub observables: Vec<SchemeReport>,
    /// Per-chain KSD of the retained states (None when diverged or disabled).
    pub ksd: Vec<Option<f64>>,
    pub extremes: Vec<ChainExtremes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub replicate: usize,
    pub seed: u64,
    pub lambda_hat: BTreeMap<String, Option<f64>>,
    pub lambda_stderr: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixRow {
    pub replicate: usize,
    pub seed: u64,
    pub size: usize,
    /// Total order of the fitted map.
    pub order: usize,
    pub final_nll: f64,
    /// Minimum of log S♯π along the reference-space segments joining the
    /// images of neighbouring component means.
    pub min_segment_log_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub study: String,
    pub target: String,
    pub dim: usize,
    pub seed: u64,
    pub replicate_seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<BiasSweep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<LambdaRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub separatrix: Vec<SeparatrixRow>,
    /// Total diverged chains (or sweep rows) across the experiment.
    pub divergences: usize,
}

/// In-memory experiment artifacts, keyed by path relative to the output
/// directory. Always contains `config.json` and `report.json`.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub files: BTreeMap<String, Vec<u8>>,
}

impl ExperimentOutput {
    /// Writes every file below `dir`, creating directories as needed.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Runs a validated experiment. The configuration is resolved first and the
/// resolved form is what gets echoed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let config = config.resolved()?;
    let target = config.target.build()?;
    let tfs = config.test_functions()?;
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    files.insert("config.json".into(), config.to_json().into_bytes());

    let mut report = ExperimentReport {
        name: config.name.clone(),
        study: config.study.kind().into(),
        target: target.name.clone(),
        dim: target.dim,
        seed: config.seed,
        replicate_seeds: config.replicate_seeds(),
        scale: config.scale.clone(),
        map: None,
        runs: Vec::new(),
        bias: Vec::new(),
        lambda: Vec::new(),
        separatrix: Vec::new(),
        divergences: 0,
    };

    match &config.study {
        Study::MixtureMaps {
            sizes,
            spec,
            max_order,
            grid_half_width,
            grid_points,
            segment_points,
        } => {
            report.separatrix = mixture_study(
                &config,
                &target,
                sizes,
                spec,
                *max_order,
                *grid_half_width,
                *grid_points,
                *segment_points,
                &mut files,
            )?;
        }
        _ => {
            let (map, summary, samples) = build_map(&config, &target)?;
            report.map = summary;
            if let Some(m) = &map {
                if !matches!(config.map, MapSource::Exact {}) {
                    files.insert("map.json".into(), (map_to_json(m) + "\n").into_bytes());
                }
            }
            if !samples.is_empty() {
                files.insert("tables/training_samples.csv".into(), rows_csv(&samples, "y").into_bytes());
            }
            match &config.study {
                Study::Chains {} => {
                    report.runs = chain_study(&config, &target, map.as_ref(), &tfs, &mut files)?;
                    report.divergences = report.runs.iter().map(|r| r.diverged_chains).sum();
                }
                Study::BiasSweep {
                    h_list,
                    time,
                    burn_in_time,
                } => {
                    let (sweeps, lambda) =
                        bias_study(&config, &target, map.as_ref(), &tfs[0], h_list, *time, *burn_in_time, &mut files)?;
                    report.divergences = sweeps
                        .iter()
                        .flat_map(|s| s.rows.iter())
                        .filter(|r| r.diverged_at.is_some())
                        .count();
                    report.bias = sweeps;
                    report.lambda = lambda;
                }
                Study::MixtureMaps { .. } => unreachable!(),
            }
        }
    }

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    files.insert("report.json".into(), json.into_bytes());
    Ok(ExperimentOutput { report, files })
}

fn rows_csv(rows: &[Vec<f64>], prefix: &str) -> String {
    let mut s = String::new();
    let d = rows.first().map_or(0, |r| r.len());
    let header: Vec<String> = (1..=d).map(|i| format!("{prefix}_{i}")).collect();
    let _ = writeln!(s, "{}", header.join(","));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

struct ChainRecord {
    id: u64,
    diverged_at: Option<usize>,
    /// Post burn-in observables, one series per test function.
    series: Vec<Vec<f64>>,
    /// Every `thin`-th state (row 0 is y0).
    states: Vec<f64>,
    extremes: ChainExtremes,
    ksd: Option<f64>,
}

fn record_chain(
    config: &ExperimentConfig,
    target: &TargetDensity,
    sc: &SamplerConfig,
    run: &SchemeRun,
    tfs: &[TestFunction],
    y0: &[f64],
    seed: u64,
    id: u64,
) -> Result<ChainRecord> {
    let d = target.dim;
    let retained_len = run.steps + 1 - run.burn_in;
    let mut series: Vec<Vec<f64>> = tfs.iter().map(|_| Vec::with_capacity(retained_len)).collect();
    let mut states = Vec::with_capacity((run.steps / run.thin + 1) * d);
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut retained = 0usize;
    let summary = run_chain_streaming(target, sc, y0, run.steps, seed, id, |k, y| {
        if k % run.thin == 0 {
            states.extend_from_slice(y);
        }
        if k >= run.burn_in {
            retained += 1;
            for (s, tf) in series.iter_mut().zip(tfs) {
                s.push(tf.eval(y));
            }
            for i in 0..d {
                lo[i] = lo[i].min(y[i]);
                hi[i] = hi[i].max(y[i]);
            }
        }
    })?;
    let ksd = if config.diagnostics.ksd && summary.diverged_at.is_none() {
        let first = run.burn_in.div_ceil(run.thin);
        let pts = subsample_rows(&states, d, first, config.diagnostics.ksd_points);
        if pts.is_empty() {
            None
        } else {
            let k2 = ksd_squared(
                &pts,
                d,
                |y, s| target.grad_log_density_into(y, s),
                &config.diagnostics.kernel,
                config.diagnostics.ksd_u_statistic,
            )?;
            Some(k2.max(0.0).sqrt())
        }
    } else {
        None
    };
    Ok(ChainRecord {
        id,
        diverged_at: summary.diverged_at,
        series,
        states,
        extremes: ChainExtremes {
            chain_id: id,
            retained,
            diverged_at: summary.diverged_at,
            min: (retained > 0).then_some(lo),
            max: (retained > 0).then_some(hi),
        },
        ksd,
    })
}

fn chain_study(
    config: &ExperimentConfig,
    target: &TargetDensity,
    map: Option<&Arc<TransportMap>>,
    tfs: &[TestFunction],
    files: &mut BTreeMap<String, Vec<u8>>,
) -> Result<Vec<RunReport>> {
    let y0 = config.initial_state.clone().expect("resolved config has an initial state");
    let d = target.dim;
    let mut reports = Vec::new();
    let mut summary_csv = String::from("label,scheme,h,replicate,seed,phi,n_chains,diverged_chains,mean,avar,truth\n");
    let mut mse_csv = String::from("label,replicate,phi,length,bias,variance,mse\n");
    let mut ksd_csv = String::from("label,replicate,seed,chain_id,ksd\n");
    let mut ext_csv = String::from("label,replicate,chain_id,retained,diverged_at");
    for i in 1..=d {
        let _ = write!(ext_csv, ",min_{i}");
    }
    for i in 1..=d {
        let _ = write!(ext_csv, ",max_{i}");
    }
    ext_csv.push('\n');

    for (rep, &seed) in config.replicate_seeds().iter().enumerate() {
        for run in &config.schemes {
            let label = run.label();
            let sc = sampler_config(run, target, map)?;
            let records: Vec<Result<ChainRecord>> = (0..run.n_chains as u64)
                .into_par_iter()
                .map(|id| record_chain(config, target, &sc, run, tfs, &y0, seed, id))
                .collect();
            let records = records.into_iter().collect::<Result<Vec<_>>>()?;

            let mut observables = Vec::with_capacity(tfs.len());
            for (j, (tf, spec)) in tfs.iter().zip(&config.test_functions).enumerate() {
                let chains: Vec<(u64, u64, Option<usize>, Vec<f64>)> = records
                    .iter()
                    .map(|r| (r.id, seed, r.diverged_at, r.series[j].clone()))
                    .collect();
                let truth = if config.diagnostics.mse { spec.truth } else { None };
                let mut rep_obs =
                    summarize_chains(run.scheme.name(), run.h, tf, truth, &chains, config.diagnostics.checkpoints);
                rep_obs.truth = spec.truth;
                let _ = writeln!(
                    summary_csv,
                    "{label},{},{:e},{rep},{seed},{},{},{},{},{},{}",
                    run.scheme,
                    run.h,
                    tf.name,
                    rep_obs.n_chains,
                    rep_obs.diverged_chains,
                    fmt_opt(rep_obs.mean),
                    fmt_opt(rep_obs.avar),
                    fmt_opt(spec.truth)
                );
                for row in &rep_obs.mse {
                    let _ = writeln!(
                        mse_csv,
                        "{label},{rep},{},{},{:e},{:e},{:e}",
                        tf.name, row.length, row.bias, row.variance, row.mse
                    );
                }
                observables.push(rep_obs);
            }
            for r in &records {
                if config.diagnostics.ksd {
                    let _ = writeln!(ksd_csv, "{label},{rep},{seed},{},{}", r.id, fmt_opt(r.ksd));
                }
                let e = &r.extremes;
                let _ = write!(
                    ext_csv,
                    "{label},{rep},{},{},{}",
                    r.id,
                    e.retained,
                    e.diverged_at.map(|v| v.to_string()).unwrap_or_default()
                );
                for v in e.min.iter().chain(e.max.iter()) {
                    for x in v {
                        let _ = write!(ext_csv, ",{x:e}");
                    }
                }
                if e.min.is_none() {
                    ext_csv.push_str(&",".repeat(2 * d));
                }
                ext_csv.push('\n');
                if config.diagnostics.save_chains {
                    let chain = Chain {
                        dim: d,
                        states: r.states.clone(),
                        scheme: run.scheme,
                        step_size: run.h,
                        seed,
                        chain_id: r.id,
                        diverged_at: r.diverged_at,
                    };
                    let mut buf = Vec::new();
                    write_chain_csv(&chain, run.thin, &mut buf)?;
                    files.insert(format!("chains/{label}/r{rep:03}_c{:04}.csv", r.id), buf);
                }
            }
            if config.diagnostics.svg && rep == 0 && d == 2 {
                if let Some(r) = records.first() {
                    let first = run.burn_in.div_ceil(run.thin);
                    let pts = subsample_rows(&r.states, d, first.min(r.states.len() / d), 2000);
                    let mut p = Plot::new(&format!("{label}: retained states (chain 0)"), "y_1", "y_2");
                    p.add(&label, Style::Scatter, pts.chunks(2).map(|c| (c[0], c[1])).collect());
                    files.insert(format!("plots/scatter_{label}.svg"), p.to_svg().into_bytes());
                }
            }
            reports.push(RunReport {
                label: label.clone(),
                scheme: run.scheme.name().into(),
                h: run.h,
                steps: run.steps,
                burn_in: run.burn_in,
                thin: run.thin,
                replicate: rep,
                seed,
                diverged_chains: records.iter().filter(|r| r.diverged_at.is_some()).count(),
                observables,
                ksd: records.iter().map(|r| r.ksd).collect(),
                extremes: records.into_iter().map(|r| r.extremes).collect(),
            });
        }
    }

    files.insert("tables/summary.csv".into(), summary_csv.into_bytes());
    files.insert("tables/extremes.csv".into(), ext_csv.into_bytes());
    if config.diagnostics.ksd {
        files.insert("tables/ksd.csv".into(), ksd_csv.into_bytes());
    }
    let any_mse = reports.iter().any(|r| r.observables.iter().any(|o| !o.mse.is_empty()));
    if any_mse {
        files.insert("tables/mse.csv".into(), mse_csv.into_bytes());
    }
    if config.diagnostics.svg {
        if any_mse {
            for (j, tf) in tfs.iter().enumerate() {
                let mut p = Plot::new(&format!("MSE of the ergodic average of {}", tf.name), "steps", "MSE").log_log();
                for r in reports.iter().filter(|r| r.replicate == 0) {
                    let pts: Vec<(f64, f64)> =
                        r.observables[j].mse.iter().map(|m| (m.length as f64, m.mse)).collect();
                    if !pts.is_empty() {
                        p.add(&r.label, Style::Line, pts);
                    }
                }
                if !p.series.is_empty() {
                    files.insert(format!("plots/mse_{}.svg", tf.name), p.to_svg().into_bytes());
                }
            }
        }
        if config.diagnostics.ksd {
            let mut p = Plot::new("KSD per replicate (chain 0)", "replicate", "KSD");
            for run in &config.schemes {
                let label = run.label();
                let pts: Vec<(f64, f64)> = reports
                    .iter()
                    .filter(|r| r.label == label)
                    .filter_map(|r| r.ksd.first().copied().flatten().map(|k| (r.replicate as f64, k)))
                    .collect();
                if !pts.is_empty() {
                    p.add(&label, Style::Scatter, pts);
                }
            }
            files.insert("plots/ksd.svg".into(), p.to_svg().into_bytes());
        }
    }
    Ok(reports)
}

#[allow(clippy::too_many_arguments)]
fn bias_study(
    config: &ExperimentConfig,
    target: &TargetDensity,
    map: Option<&Arc<TransportMap>>,
    phi: &TestFunction,
    h_list: &[f64],
    time: f64,
    burn_in_time: f64,
    files: &mut BTreeMap<String, Vec<u8>>,
) -> Result<(Vec<BiasSweep>, Vec<LambdaRow>)> {
    let y0 = config.initial_state.clone().expect("resolved config has an initial state");
    let truth = config.test_functions[0].truth.expect("validated");
    let seeds = config.replicate_seeds();
    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|r| (0..config.schemes.len()).map(move |s| (r, s)))
        .collect();
    let results: Vec<Result<BiasSweep>> = jobs
        .par_iter()
        .map(|&(r, s)| {
            let run = &config.schemes[s];
            let mut sc = sampler_config(run, target, map)?;
            sc.step_size = h_list[0];
            bias_sweep(target, &sc, &y0, phi, truth, h_list, time, burn_in_time, seeds[r])
        })
        .collect();
    let sweeps = results.into_iter().collect::<Result<Vec<_>>>()?;

    let labels: Vec<String> = config.schemes.iter().map(|r| r.label()).collect();
    let mut rows_csv = String::from("label,scheme,replicate,seed,h,steps,estimate,bias,ratio,ratio_stderr,diverged_at\n");
    let mut lambda = Vec::with_capacity(seeds.len());
    for (r, &seed) in seeds.iter().enumerate() {
        let mut row = LambdaRow {
            replicate: r,
            seed,
            lambda_hat: BTreeMap::new(),
            lambda_stderr: BTreeMap::new(),
        };
        for (s, label) in labels.iter().enumerate() {
            let sw = &sweeps[r * labels.len() + s];
            for b in &sw.rows {
                let _ = writeln!(
                    rows_csv,
                    "{label},{},{r},{seed},{:e},{},{},{},{},{},{}",
                    sw.scheme,
                    b.h,
                    b.steps,
                    fmt_opt(b.estimate),
                    fmt_opt(b.bias),
                    fmt_opt(b.ratio),
                    fmt_opt(b.ratio_stderr),
                    b.diverged_at.map(|v| v.to_string()).unwrap_or_default()
                );
            }
            row.lambda_hat.insert(label.clone(), sw.lambda_hat);
            row.lambda_stderr.insert(label.clone(), sw.lambda_stderr);
        }
        lambda.push(row);
    }
    let mut lambda_csv = String::from("replicate,seed");
    for l in &labels {
        let _ = write!(lambda_csv, ",lambda_{l},stderr_{l}");
    }
    lambda_csv.push('\n');
    for row in &lambda {
        let _ = write!(lambda_csv, "{},{}", row.replicate, row.seed);
        for l in &labels {
            let _ = write!(lambda_csv, ",{},{}", fmt_opt(row.lambda_hat[l]), fmt_opt(row.lambda_stderr[l]));
        }
        lambda_csv.push('\n');
    }
    files.insert("tables/bias_sweep.csv".into(), rows_csv.into_bytes());
    files.insert("tables/lambda.csv".into(), lambda_csv.into_bytes());
    if config.diagnostics.svg {
        let mut p = Plot::new(&format!("|e({}, h)| (replicate 0)", phi.name), "h", "|e|").log_log();
        for (s, label) in labels.iter().enumerate() {
            let pts: Vec<(f64, f64)> = sweeps[s]
                .rows
                .iter()
                .filter_map(|b| b.bias.map(|e| (b.h, e.abs())))
                .collect();
            p.add(label, Style::Line, pts);
        }
        files.insert("plots/bias.svg".into(), p.to_svg().into_bytes());
    }
    Ok((sweeps, lambda))
}

/// Pairs (i, j), i < j, where one point is a nearest neighbour of the other
/// (ties included). For modes on a square these are the four edges.
pub fn neighbour_pairs(points: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let n = points.len();
    let nearest: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dist(&points[i], &points[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let dij = dist(&points[i], &points[j]);
            let tie = |m: f64| dij <= m * (1.0 + 1e-9);
            if tie(nearest[i]) || tie(nearest[j]) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Minimum of log S♯π along the straight reference-space segments joining
/// S(mᵢ) and S(mⱼ) for neighbouring modes (see [`neighbour_pairs`]). Each
/// such segment crosses the separatrix between two adjacent modes.
pub fn min_segment_log_density(
    target: &dyn LogDensity,
    map: &dyn Transport,
    modes: &[Vec<f64>],
    points: usize,
) -> Result<f64> {
    let pf = PushforwardDensity::new(target, map)?;
    let images = modes.iter().map(|m| map.forward(m)).collect::<Vec<_>>();
    let d = map.dim();
    let mut min = f64::INFINITY;
    let mut x = vec![0.0; d];
    for (i, j) in neighbour_pairs(modes) {
        for k in 0..points {
            let t = k as f64 / (points - 1) as f64;
            for c in 0..d {
                x[c] = (1.0 - t) * images[i][c] + t * images[j][c];
            }
            min = min.min(pf.try_log_density(&x)?);
        }
    }
    Ok(min)
}

#[allow(clippy::too_many_arguments)]
fn mixture_study(
    config: &ExperimentConfig,
    target: &TargetDensity,
    sizes: &[usize],
    spec: &MapTrainingSpec,
    max_order: Option<usize>,
    half_width: f64,
    grid_points: usize,
    segment_points: usize,
    files: &mut BTreeMap<String, Vec<u8>>,
) -> Result<Vec<SeparatrixRow>> {
    let TargetSpec::GaussianMixture { means, .. } = &config.target else {
        return Err(config_err("mixture_maps requires a gaussian_mixture target"));
    };
    let seeds = config.replicate_seeds();
    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|r| (0..sizes.len()).map(move |s| (r, s)))
        .collect();
    type Job = (SeparatrixRow, Option<(TransportMap, Vec<Vec<f64>>)>);
    let results: Vec<Result<Job>> = jobs
        .par_iter()
        .map(|&(r, s)| {
            // samples of different sizes share a prefix within a replicate
            let samples = config.target.exact_samples(sizes[s], seeds[r])?;
            let (map, rep) = match max_order {
                Some(m) => {
                    let (map, rep, _) = train_map_adaptive(&samples, spec, m, ORDER_HOLDOUT)?;
                    (map, rep)
                }
                None => train_map_with_report(&samples, spec)?,
            };
            let min = min_segment_log_density(target, &map, means, segment_points)?;
            let row = SeparatrixRow {
                replicate: r,
                seed: seeds[r],
                size: sizes[s],
                order: rep.spec.total_order,
                final_nll: rep.final_nll,
                min_segment_log_density: min,
            };
            Ok((row, (r == 0).then_some((map, samples))))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut table = String::from("replicate,seed,size,order,final_nll,min_segment_log_density\n");
    for (row, _) in &results {
        let _ = writeln!(
            table,
            "{},{},{},{},{:e},{:e}",
            row.replicate, row.seed, row.size, row.order, row.final_nll, row.min_segment_log_density
        );
    }
    files.insert("tables/separatrix.csv".into(), table.into_bytes());

    for (row, extra) in &results {
        let Some((map, samples)) = extra else { continue };
        let n = row.size;
        let pushed: Vec<Vec<f64>> = samples.iter().map(|y| map.forward(y)).collect();
        files.insert(format!("mixture/scatter_n{n}.csv"), rows_csv(&pushed, "x").into_bytes());
        files.insert(format!("maps/mixture_n{n}.json"), (map_to_json(map) + "\n").into_bytes());
        let pf = PushforwardDensity::new(target, map)?;
        let mut grid = String::from("x_1,x_2,log_density\n");
        for i in 0..grid_points {
            for j in 0..grid_points {
                let x1 = -half_width + 2.0 * half_width * i as f64 / (grid_points - 1) as f64;
                let x2 = -half_width + 2.0 * half_width * j as f64 / (grid_points - 1) as f64;
                let v = pf.try_log_density(&[x1, x2])?;
                let _ = writeln!(grid, "{x1:e},{x2:e},{v:e}");
            }
        }
        files.insert(format!("mixture/density_n{n}.csv"), grid.into_bytes());
        if config.diagnostics.svg {
            let mut p = Plot::new(&format!("Pushforward of {n} training samples"), "x_1", "x_2");
            p.add(&format!("N = {n}"), Style::Scatter, pushed.iter().map(|x| (x[0], x[1])).collect());
            files.insert(format!("plots/mixture_scatter_n{n}.svg"), p.to_svg().into_bytes());
        }
    }
    Ok(results.into_iter().map(|(r, _)| r).collect())
}

fn desk(desk_scale: bool, desk: usize, full: usize) -> usize {
    if desk_scale {
        desk
    } else {
        full
    }
}

/// Built-in experiment configurations. `desk_scale` shortens run lengths
/// tenfold and reduces replicate counts; the scaling is recorded in the
/// config's `scale` notes.
pub fn preset(name: &str, desk_scale: bool) -> Result<ExperimentConfig> {
    let scale = |notes: Vec<String>| {
        Some(ScaleInfo {
            desk_scale,
            notes,
        })
    };
    let cfg = match name {
        "banana-bias" => {
            let time = if desk_scale { 1e5 } else { 1e6 };
            let mut tmula = SchemeRun::new(Scheme::Tmula, 0.0, 0);
            tmula.label = Some("tmula".into());
            let mut emrmld = SchemeRun::new(Scheme::Emrmld, 0.0, 0);
            emrmld.label = Some("emrmld".into());
            ExperimentConfig {
                name: "banana-bias".into(),
                target: TargetSpec::reference_banana(),
                initial_state: None,
                map: MapSource::Exact {},
                schemes: vec![tmula, emrmld],
                test_functions: vec![TestFunctionSpec::new("sum_sq_plus_sum", Some(BANANA_SUM_SQ_PLUS_SUM))],
                diagnostics: DiagnosticsToggles::default(),
                study: Study::BiasSweep {
                    h_list: vec![4e-3, 2e-3, 1e-3],
                    time,
                    burn_in_time: 10.0,
                },
                seed: 1,
                replicates: 5,
                output_dir: None,
                scale: scale(vec![format!("physical time T = {time:e} per step size (reference 1e6)")]),
            }
        }
        "funnel" => {
            let thin = desk(desk_scale, 10, 100);
            let steps = 11_000 * thin;
            let burn_in = 1_000 * thin;
            let mk = |scheme: Scheme| {
                let mut r = SchemeRun::new(scheme, 8e-3, steps);
                r.burn_in = burn_in;
                r.thin = thin;
                r
            };
            let mut rmld = mk(Scheme::Rmld);
            rmld.metric = Some(MetricSpec::FunnelFisher);
            let mut irr = mk(Scheme::TmulaIrr);
            irr.skew_delta = Some(1.0);
            ExperimentConfig {
                name: "funnel".into(),
                target: TargetSpec::reference_funnel(),
                initial_state: None,
                map: MapSource::Train {
                    spec: MapTrainingSpec::with_order(3),
                    samples: TrainingSamples::Ula {
                        h: 1e-6,
                        count: 20_000,
                        thin: 50,
                        burn_in: 0,
                    },
                },
                schemes: vec![mk(Scheme::Ula), mk(Scheme::Tmula), rmld, mk(Scheme::Emrmld), irr],
                test_functions: vec![
                    TestFunctionSpec::new("exp_y2", None),
                    TestFunctionSpec::new("sum", None),
                    TestFunctionSpec::new("sum_sq", None),
                ],
                diagnostics: DiagnosticsToggles {
                    ksd: true,
                    ksd_points: 10_000,
                    save_chains: !desk_scale,
                    ..DiagnosticsToggles::default()
                },
                study: Study::Chains {},
                seed: 1,
                replicates: 10,
                output_dir: None,
                scale: scale(vec![format!(
                    "{steps} steps per chain thinned by {thin} to 1e4 KSD points (reference: longer chains)"
                )]),
            }
        }
        "rosenbrock" => {
            let steps = desk(desk_scale, 100_000, 1_000_000);
            let mk = |scheme: Scheme| {
                let mut r = SchemeRun::new(scheme, 0.01, steps);
                r.burn_in = steps / 10;
                r.thin = 10;
                r
            };
            ExperimentConfig {
                name: "rosenbrock".into(),
                target: TargetSpec::reference_rosenbrock(),
                initial_state: None,
                map: MapSource::Exact {},
                schemes: vec![mk(Scheme::Ula), mk(Scheme::Uila), mk(Scheme::Tmuila)],
                test_functions: vec![TestFunctionSpec::new("sum", None), TestFunctionSpec::new("sum_sq", None)],
                diagnostics: DiagnosticsToggles {
                    save_chains: !desk_scale,
                    ..DiagnosticsToggles::default()
                },
                study: Study::Chains {},
                seed: 1,
                replicates: 5,
                output_dir: None,
                scale: scale(vec![format!("{steps} steps per chain (reference 1e6), 5 seeds")]),
            }
        }
        "mixture" => ExperimentConfig {
            name: "mixture".into(),
            target: TargetSpec::reference_mixture(),
            initial_state: None,
            map: MapSource::None {},
            schemes: Vec::new(),
            test_functions: Vec::new(),
            diagnostics: DiagnosticsToggles::default(),
            study: Study::MixtureMaps {
                sizes: vec![200, 2000],
                spec: MapTrainingSpec::default(),
                max_order: Some(6),
                grid_half_width: 4.0,
                grid_points: 81,
                segment_points: 201,
            },
            seed: 1,
            replicates: 10,
            output_dir: None,
            scale: scale(Vec::new()),
        },
        other => {
            return Err(config_err(format!(
                "unknown preset {other:?} (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// E[Σ yᵢ² + yᵢ] under the reference banana (s = 4, b = 0.01).
pub const BANANA_SUM_SQ_PLUS_SUM: f64 = 10.2792;
