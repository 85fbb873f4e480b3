//! Langevin kernels and the chain runner.
//!
//! Reference-space schemes (TMULA, TMULA+Irr, TMUILA) keep the reference state
//! x authoritative and derive y = T(x) after every step.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::targets::{LogDensity, TargetDensity};
use crate::transport::{
    invert_jacobian, metric_divergence_into, pushforward_grad_from_y, MapWorkspace, Transport,
    TransportMap,
};

/// Sup-norm above which a chain is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;
pub const SKEW_TOL: f64 = 1e-12;

/// Deterministic standard-normal stream keyed by (seed, chain id).
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, chain_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain_id);
        NoiseStream { rng }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut self.rng);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Ula,
    Tmula,
    Emrmld,
    TmulaIrr,
    Tmuila,
    Uila,
    /// Reversible perturbation with a user-supplied metric B(y).
    Rmld,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Ula,
        Scheme::Tmula,
        Scheme::Emrmld,
        Scheme::TmulaIrr,
        Scheme::Tmuila,
        Scheme::Uila,
        Scheme::Rmld,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ula => "ula",
            Scheme::Tmula => "tmula",
            Scheme::Emrmld => "emrmld",
            Scheme::TmulaIrr => "tmula_irr",
            Scheme::Tmuila => "tmuila",
            Scheme::Uila => "uila",
            Scheme::Rmld => "rmld",
        }
    }

    pub fn needs_map(self) -> bool {
        matches!(
            self,
            Scheme::Tmula | Scheme::Emrmld | Scheme::TmulaIrr | Scheme::Tmuila
        )
    }

    pub fn is_implicit(self) -> bool {
        matches!(self, Scheme::Tmuila | Scheme::Uila)
    }

    fn in_reference_space(self) -> bool {
        matches!(self, Scheme::Tmula | Scheme::TmulaIrr | Scheme::Tmuila)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplicitSolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub max_halvings: usize,
}

impl Default for ImplicitSolverOptions {
    fn default() -> Self {
        ImplicitSolverOptions {
            tol: 1e-10,
            max_iters: 50,
            max_halvings: 30,
        }
    }
}

/// State-dependent positive-definite matrix B(y) for the RMLD scheme.
pub trait Metric: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    /// Writes B(y), ∇·B(y) and a factor R with R Rᵀ = B(y) (all row-major).
    fn eval(&self, y: &[f64], b: &mut [f64], div: &mut [f64], root: &mut [f64]) -> Result<()>;
}

/// Expected Fisher information plus negative log-prior Hessian for the funnel
/// posterior, inverted:
/// B(μ,γ) = diag(1/(2Nβ + e^γ), 1/(N e^{−2γ} + 1/3)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunnelFisherMetric {
    pub n: f64,
    pub beta: f64,
}

impl FunnelFisherMetric {
    pub fn new(n: f64, beta: f64) -> Result<Self> {
        if !(n > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidParameter("funnel metric needs N > 0 and beta > 0".into()));
        }
        Ok(FunnelFisherMetric { n, beta })
    }

    pub fn for_target(target: &TargetDensity) -> Result<Self> {
        let (n, _, _) = target
            .funnel_data_summary()
            .ok_or_else(|| Error::InvalidParameter("funnel metric requires a funnel target".into()))?;
        let beta = *target
            .params
            .get("beta")
            .ok_or_else(|| Error::InvalidParameter("funnel target has no beta".into()))?;
        Self::new(n, beta)
    }
}

impl Metric for FunnelFisherMetric {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &[f64], b: &mut [f64], div: &mut [f64], root: &mut [f64]) -> Result<()> {
        let g = y[1];
        let b11 = 1.0 / (2.0 * self.n * self.beta + g.exp());
        let q = self.n * (-2.0 * g).exp() + 1.0 / 3.0;
        let b22 = 1.0 / q;
        b.copy_from_slice(&[b11, 0.0, 0.0, b22]);
        // B₁₁ does not depend on μ; ∂_γ B₂₂ = 2N e^{−2γ}/q²
        div[0] = 0.0;
        div[1] = 2.0 * self.n * (-2.0 * g).exp() / (q * q);
        root.copy_from_slice(&[b11.sqrt(), 0.0, 0.0, b22.sqrt()]);
        if b.iter().chain(div.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Step("non-finite metric".into()));
        }
        Ok(())
    }
}

/// Canonical 2-D rotation δ[[0,1],[−1,0]].
pub fn rotation_skew(delta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, delta, -delta, 0.0])
}

/// ‖D + Dᵀ‖∞ (maximum absolute row sum).
pub fn skew_defect(d: &DMatrix<f64>) -> f64 {
    let s = d + d.transpose();
    (0..s.nrows())
        .map(|i| (0..s.ncols()).map(|j| s[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn validate_skew(d: &DMatrix<f64>) -> Result<()> {
    if !d.is_square() {
        return Err(Error::InvalidParameter("skew matrix must be square".into()));
    }
    let defect = skew_defect(d);
    if !(defect <= SKEW_TOL) {
        return Err(Error::InvalidParameter(format!(
            "D is not skew-symmetric: |D + D^T|_inf = {defect:e}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    pub step_size: f64,
    pub skew: Option<DMatrix<f64>>,
    pub map: Option<Arc<TransportMap>>,
    pub metric: Option<Arc<dyn Metric>>,
    pub implicit_solver: ImplicitSolverOptions,
}

impl SamplerConfig {
    pub fn new(scheme: Scheme, step_size: f64) -> Self {
        SamplerConfig {
            scheme,
            step_size,
            skew: None,
            map: None,
            metric: None,
            implicit_solver: ImplicitSolverOptions::default(),
        }
    }

    pub fn with_map(mut self, map: TransportMap) -> Self {
        self.map = Some(Arc::new(map));
        self
    }

    pub fn with_shared_map(mut self, map: Arc<TransportMap>) -> Self {
        self.map = Some(map);
        self
    }

    pub fn with_skew(mut self, d: DMatrix<f64>) -> Self {
        self.skew = Some(d);
        self
    }

    pub fn with_metric(mut self, metric: Arc<dyn Metric>) -> Self {
        self.metric = Some(metric);
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be nonnegative and finite (got {})",
                self.step_size
            )));
        }
        if self.scheme.needs_map() {
            let map = self.map.as_ref().ok_or_else(|| {
                Error::Config(format!("scheme {} requires a transport map", self.scheme))
            })?;
            if map.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: map.dim(),
                });
            }
        }
        if self.scheme == Scheme::Rmld {
            let metric = self
                .metric
                .as_ref()
                .ok_or_else(|| Error::Config("scheme rmld requires a metric".into()))?;
            if metric.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: metric.dim(),
                });
            }
        }
        if let Some(d) = &self.skew {
            validate_skew(d)?;
            if d.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: d.nrows(),
                });
            }
        }
        if self.scheme == Scheme::TmulaIrr && self.skew.is_none() {
            return Err(Error::Config("scheme tmula_irr requires a skew matrix D".into()));
        }
        if self.scheme.is_implicit() {
            let s = &self.implicit_solver;
            if !(s.tol > 0.0) || s.max_iters == 0 {
                return Err(Error::Config("implicit solver needs tol > 0 and max_iters ≥ 1".into()));
            }
        }
        Ok(())
    }
}

/// Scratch buffers shared by the step functions.
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    pub map: MapWorkspace,
    g: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    r: Vec<f64>,
    r2: Vec<f64>,
    u: Vec<f64>,
    trial: Vec<f64>,
    mat: Vec<f64>,
    mat2: Vec<f64>,
    mat3: Vec<f64>,
    pub last_newton_iterations: usize,
}

impl StepWorkspace {
    pub fn new(d: usize) -> Self {
        StepWorkspace {
            map: MapWorkspace::new(d),
            g: vec![0.0; d],
            v: vec![0.0; d],
            w: vec![0.0; d],
            r: vec![0.0; d],
            r2: vec![0.0; d],
            u: vec![0.0; d],
            trial: vec![0.0; d],
            mat: vec![0.0; d * d],
            mat2: vec![0.0; d * d],
            mat3: vec![0.0; d * d],
            last_newton_iterations: 0,
        }
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Step(format!("non-finite {what}")))
    }
}

/// y' = y + h∇log π(y) + √(2h)ξ.
pub fn ula_step(
    target: &dyn LogDensity,
    y: &[f64],
    h: f64,
    xi: &[f64],
    ws: &mut StepWorkspace,
    out: &mut [f64],
) -> Result<()> {
    target.grad_log_density_into(y, &mut ws.g);
    check_finite(&ws.g, "gradient")?;
    let s = (2.0 * h).sqrt();
    for i in 0..y.len() {
        out[i] = y[i] + h * ws.g[i] + s * xi[i];
    }
    Ok(())
}

/// x' = x + h∇log η(x) + √(2h)ξ with η = S♯π; writes x' and y' = T(x').
///
/// `y` must hold T(x); it is the state the target gradient is evaluated at.
pub fn tmula_step(
    target: &dyn LogDensity,
    map: &dyn Transport,
    x: &[f64],
    y: &[f64],
    h: f64,
    xi: &[f64],
    ws: &mut StepWorkspace,
    x_out: &mut [f64],
    y_out: &mut [f64],
) -> Result<()> {
    ws.map.y.copy_from_slice(y);
    pushforward_grad_from_y(target, map, &mut ws.map, &mut ws.g)?;
    let s = (2.0 * h).sqrt();
    for i in 0..x.len() {
        x_out[i] = x[i] + h * ws.g[i] + s * xi[i];
    }
    map.inverse_into(x_out, y_out)?;
    check_finite(y_out, "state")
}

/// Reference-space irreversible step x' = x + h(I + D)∇log η(x) + √(2h)ξ.
pub fn reference_irr_step(
    target: &dyn LogDensity,
    map: &dyn Transport,
    x: &[f64],
    y: &[f64],
    h: f64,
    xi: &[f64],
    skew: &DMatrix<f64>,
    ws: &mut StepWorkspace,
    x_out: &mut [f64],
    y_out: &mut [f64],
) -> Result<()> {
    ws.map.y.copy_from_slice(y);
    pushforward_grad_from_y(target, map, &mut ws.map, &mut ws.g)?;
    let d = x.len();
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += skew[(i, j)] * ws.g[j];
        }
        ws.v[i] = ws.g[i] + acc;
    }
    let s = (2.0 * h).sqrt();
    for i in 0..d {
        x_out[i] = x[i] + h * ws.v[i] + s * xi[i];
    }
    map.inverse_into(x_out, y_out)?;
    check_finite(y_out, "state")
}

/// Euler–Maruyama step of the Riemannian dynamics with B = (J_Sᵀ J_S)⁻¹:
/// y' = y + h(B∇log π + ∇·B) + √(2h) J_S⁻¹ ξ.
pub fn emrmld_step(
    target: &dyn LogDensity,
    map: &dyn Transport,
    y: &[f64],
    h: f64,
    xi: &[f64],
    ws: &mut StepWorkspace,
    out: &mut [f64],
) -> Result<()> {
    let d = y.len();
    map.jacobian_into(y, &mut ws.map.jac);
    invert_jacobian(map, &mut ws.map)?;
    metric_divergence_into(map, y, &mut ws.map, &mut ws.w);
    target.grad_log_density_into(y, &mut ws.g);
    check_finite(&ws.g, "gradient")?;
    // B g = J_S⁻¹ (J_S⁻ᵀ g)
    linalg::mat_t_vec(&ws.map.jinv, &ws.g, &mut ws.r);
    linalg::mat_vec(&ws.map.jinv, &ws.r, &mut ws.v);
    linalg::mat_vec(&ws.map.jinv, xi, &mut ws.u);
    let s = (2.0 * h).sqrt();
    for i in 0..d {
        out[i] = y[i] + h * (ws.v[i] + ws.w[i]) + s * ws.u[i];
    }
    check_finite(&out[..d], "state")
}

/// y' = y + h(B∇log π + ∇·B) + √(2h) R ξ with R Rᵀ = B.
pub fn rmld_step(
    target: &dyn LogDensity,
    metric: &dyn Metric,
    y: &[f64],
    h: f64,
    xi: &[f64],
    ws: &mut StepWorkspace,
    out: &mut [f64],
) -> Result<()> {
    let d = y.len();
    metric.eval(y, &mut ws.mat, &mut ws.w, &mut ws.mat2)?;
    target.grad_log_density_into(y, &mut ws.g);
    check_finite(&ws.g, "gradient")?;
    linalg::mat_vec(&ws.mat, &ws.g, &mut ws.v);
    linalg::mat_vec(&ws.mat2, xi, &mut ws.u);
    let s = (2.0 * h).sqrt();
    for i in 0..d {
        out[i] = y[i] + h * (ws.v[i] + ws.w[i]) + s * ws.u[i];
    }
    check_finite(&out[..d], "state")
}

/// Solves u − base − h·grad(u) = 0 by damped Newton with a forward-difference
/// Jacobian, starting from u = base. The solution is left in `ws.u`.
fn implicit_solve<G>(
    base: &[f64],
    h: f64,
    opts: &ImplicitSolverOptions,
    ws: &mut StepWorkspace,
    mut grad: G,
) -> Result<usize>
where
    G: FnMut(&[f64], &mut [f64], &mut MapWorkspace) -> Result<()>,
{
    let d = base.len();
    ws.u.copy_from_slice(base);
    let residual = |u: &[f64], g: &[f64], r: &mut [f64]| {
        for i in 0..d {
            r[i] = u[i] - base[i] - h * g[i];
        }
        linalg::inf_norm(r)
    };
    grad(&ws.u, &mut ws.g, &mut ws.map)?;
    let mut norm = residual(&ws.u, &ws.g, &mut ws.r);
    let mut iterations = 0;
    loop {
        if norm <= opts.tol * (1.0 + linalg::inf_norm(&ws.u)) {
            return Ok(iterations);
        }
        if iterations == opts.max_iters {
            return Err(Error::ImplicitSolve {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        // Jacobian of the residual: I − h ∂grad/∂u, column by column
        for j in 0..d {
            let eps = 1e-7 * (1.0 + ws.u[j].abs());
            ws.trial.copy_from_slice(&ws.u);
            ws.trial[j] += eps;
            grad(&ws.trial, &mut ws.w, &mut ws.map)?;
            for i in 0..d {
                let dg = (ws.w[i] - ws.g[i]) / eps;
                ws.mat[i * d + j] = if i == j { 1.0 } else { 0.0 } - h * dg;
            }
        }
        linalg::invert_general(&ws.mat, d, &mut ws.mat2, &mut ws.mat3)
            .map_err(|_| Error::ImplicitSolve {
                iterations,
                residual: norm,
            })?;
        linalg::mat_vec(&ws.mat2, &ws.r, &mut ws.v);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            for i in 0..d {
                ws.trial[i] = ws.u[i] - lambda * ws.v[i];
            }
            if grad(&ws.trial, &mut ws.w, &mut ws.map).is_ok() {
                let new_norm = residual(&ws.trial, &ws.w, &mut ws.r2);
                if new_norm.is_finite() && new_norm < norm {
                    std::mem::swap(&mut ws.r, &mut ws.r2);
                    ws.u.copy_from_slice(&ws.trial);
                    ws.g.copy_from_slice(&ws.w);
                    norm = new_norm;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::ImplicitSolve {
                iterations,
                residual: norm,
            });
        }
    }
}

/// Split-step implicit step in reference coordinates: solve
/// u − x − h∇log η(u) = 0, then x' = u + √(2h)ξ and y' = T(x').
pub fn tmuila_step(
    target: &dyn LogDensity,
    map: &dyn Transport,
    x: &[f64],
    h: f64,
    xi: &[f64],
    solver: &ImplicitSolverOptions,
    ws: &mut StepWorkspace,
    x_out: &mut [f64],
    y_out: &mut [f64],
) -> Result<()> {
    let iters = implicit_solve(x, h, solver, ws, |u, g, mws| {
        map.inverse_into(u, &mut mws.y)?;
        pushforward_grad_from_y(target, map, mws, g)
    })?;
    ws.last_newton_iterations = iters;
    let s = (2.0 * h).sqrt();
    for i in 0..x.len() {
        x_out[i] = ws.u[i] + s * xi[i];
    }
    map.inverse_into(x_out, y_out)?;
    check_finite(y_out, "state")
}

/// Split-step implicit step in target space: solve y* = y + h∇log π(y*),
/// then y' = y* + √(2h)ξ.
pub fn uila_step(
    target: &dyn LogDensity,
    y: &[f64],
    h: f64,
    xi: &[f64],
    solver: &ImplicitSolverOptions,
    ws: &mut StepWorkspace,
    out: &mut [f64],
) -> Result<()> {
    let iters = implicit_solve(y, h, solver, ws, |u, g, _| {
        target.grad_log_density_into(u, g);
        check_finite(g, "gradient")
    })?;
    ws.last_newton_iterations = iters;
    let s = (2.0 * h).sqrt();
    for i in 0..y.len() {
        out[i] = ws.u[i] + s * xi[i];
    }
    check_finite(&out[..y.len()], "state")
}

/// Stateful single-chain stepper.
pub struct Sampler<'a> {
    target: &'a dyn LogDensity,
    config: &'a SamplerConfig,
    ws: StepWorkspace,
    x: Vec<f64>,
    y: Vec<f64>,
    x_next: Vec<f64>,
    y_next: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub fn new(target: &'a dyn LogDensity, config: &'a SamplerConfig, y0: &[f64]) -> Result<Self> {
        let d = target.dim();
        if y0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: y0.len(),
            });
        }
        config.validate(d)?;
        let mut x = vec![0.0; d];
        if config.scheme.in_reference_space() {
            let map = config.map.as_ref().expect("validated");
            map.forward_into(y0, &mut x);
        } else {
            x.copy_from_slice(y0);
        }
        Ok(Sampler {
            target,
            config,
            ws: StepWorkspace::new(d),
            x,
            y: y0.to_vec(),
            x_next: vec![0.0; d],
            y_next: vec![0.0; d],
        })
    }

    /// Current target-space state.
    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Current reference-space state (equals the target state for target-space schemes).
    pub fn reference_state(&self) -> &[f64] {
        &self.x
    }

    pub fn step(&mut self, xi: &[f64]) -> Result<()> {
        let c = self.config;
        let h = c.step_size;
        let t = self.target;
        let ws = &mut self.ws;
        match c.scheme {
            Scheme::Ula => ula_step(t, &self.y, h, xi, ws, &mut self.y_next)?,
            Scheme::Uila => uila_step(t, &self.y, h, xi, &c.implicit_solver, ws, &mut self.y_next)?,
            Scheme::Rmld => {
                let metric = c.metric.as_deref().expect("validated");
                rmld_step(t, metric, &self.y, h, xi, ws, &mut self.y_next)?
            }
            Scheme::Emrmld => {
                let map = c.map.as_deref().expect("validated");
                emrmld_step(t, map, &self.y, h, xi, ws, &mut self.y_next)?
            }
            Scheme::Tmula => {
                let map = c.map.as_deref().expect("validated");
                tmula_step(t, map, &self.x, &self.y, h, xi, ws, &mut self.x_next, &mut self.y_next)?
            }
            Scheme::TmulaIrr => {
                let map = c.map.as_deref().expect("validated");
                let skew = c.skew.as_ref().expect("validated");
                reference_irr_step(
                    t,
                    map,
                    &self.x,
                    &self.y,
                    h,
                    xi,
                    skew,
                    ws,
                    &mut self.x_next,
                    &mut self.y_next,
                )?
            }
            Scheme::Tmuila => {
                let map = c.map.as_deref().expect("validated");
                tmuila_step(
                    t,
                    map,
                    &self.x,
                    h,
                    xi,
                    &c.implicit_solver,
                    ws,
                    &mut self.x_next,
                    &mut self.y_next,
                )?
            }
        }
        if c.scheme.in_reference_space() {
            std::mem::swap(&mut self.x, &mut self.x_next);
            std::mem::swap(&mut self.y, &mut self.y_next);
        } else {
            std::mem::swap(&mut self.y, &mut self.y_next);
            self.x.copy_from_slice(&self.y);
        }
        if linalg::inf_norm(&self.y) > DIVERGENCE_THRESHOLD
            || linalg::inf_norm(&self.x) > DIVERGENCE_THRESHOLD
        {
            return Err(Error::Step("state exceeded the divergence threshold".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub dim: usize,
    /// (retained steps + 1) × d, row-major; row 0 is y0.
    pub states: Vec<f64>,
    pub scheme: Scheme,
    pub step_size: f64,
    pub seed: u64,
    pub chain_id: u64,
    /// Step index at which the chain left the finite region or a step failed.
    pub diverged_at: Option<usize>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Outcome of a streamed chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub diverged_at: Option<usize>,
}

/// Runs K steps, calling `visit(k, y_k)` for k = 0..=K (stopping before the
/// first non-finite or divergent state). Nothing is stored.
pub fn run_chain_streaming<F>(
    target: &dyn LogDensity,
    config: &SamplerConfig,
    y0: &[f64],
    k: usize,
    seed: u64,
    chain_id: u64,
    mut visit: F,
) -> Result<RunSummary>
where
    F: FnMut(usize, &[f64]),
{
    if k == 0 {
        return Err(Error::InvalidParameter("number of steps K must be at least 1".into()));
    }
    let mut sampler = Sampler::new(target, config, y0)?;
    let mut noise = NoiseStream::new(seed, chain_id);
    let mut xi = vec![0.0; target.dim()];
    visit(0, sampler.state());
    for step in 1..=k {
        noise.fill(&mut xi);
        if sampler.step(&xi).is_err() {
            return Ok(RunSummary {
                steps: step - 1,
                diverged_at: Some(step),
            });
        }
        visit(step, sampler.state());
    }
    Ok(RunSummary {
        steps: k,
        diverged_at: None,
    })
}

/// Runs K steps from y0 and stores every state, thinned by `thin` (row 0 is
/// always y0).
pub fn run_chain_thinned(
    target: &dyn LogDensity,
    config: &SamplerConfig,
    y0: &[f64],
    k: usize,
    seed: u64,
    chain_id: u64,
    thin: usize,
) -> Result<Chain> {
    let thin = thin.max(1);
    let d = target.dim();
    let mut states = Vec::with_capacity((k / thin + 1) * d);
    let summary = run_chain_streaming(target, config, y0, k, seed, chain_id, |step, y| {
        if step % thin == 0 {
            states.extend_from_slice(y);
        }
    })?;
    Ok(Chain {
        dim: d,
        states,
        scheme: config.scheme,
        step_size: config.step_size,
        seed,
        chain_id,
        diverged_at: summary.diverged_at,
    })
}

pub fn run_chain(
    target: &dyn LogDensity,
    config: &SamplerConfig,
    y0: &[f64],
    k: usize,
    seed: u64,
) -> Result<Chain> {
    run_chain_thinned(target, config, y0, k, seed, 0, 1)
}

/// Independent chains with ids 0..n, run in parallel and returned in id order.
pub fn run_chains(
    target: &(dyn LogDensity + Sync),
    config: &SamplerConfig,
    y0: &[f64],
    k: usize,
    seed: u64,
    n_chains: usize,
    thin: usize,
) -> Result<Vec<Chain>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|id| run_chain_thinned(target, config, y0, k, seed, id, thin))
        .collect()
}

/// Writes `step,y_1..y_d` rows with 17 significant digits.
pub fn write_chain_csv<W: Write>(chain: &Chain, thin: usize, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    write!(w, "step")?;
    for i in 1..=chain.dim {
        write!(w, ",y_{i}")?;
    }
    writeln!(w)?;
    for (k, row) in chain.rows().enumerate() {
        write!(w, "{}", k * thin.max(1))?;
        for v in row {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_chain_csv(chain: &Chain, thin: usize, path: impl AsRef<std::path::Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_chain_csv(chain, thin, f)
}

/// Reads a chain CSV into (step indices, row-major states, dim).
pub fn read_chain_csv<R: Read>(input: R) -> Result<(Vec<usize>, Vec<f64>, usize)> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty chain file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"step")
        || cols.len() < 2
        || cols[1..].iter().enumerate().any(|(i, c)| *c != format!("y_{}", i + 1))
    {
        return Err(Error::Schema(format!("bad chain header: {header}")));
    }
    let d = cols.len() - 1;
    let mut steps = Vec::new();
    let mut states = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.trim().split(',');
        let step = it
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Schema(format!("bad step on line {}", ln + 2)))?;
        let before = states.len();
        for field in it {
            states.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Schema(format!("bad value on line {}", ln + 2)))?,
            );
        }
        if states.len() - before != d {
            return Err(Error::Schema(format!("wrong column count on line {}", ln + 2)));
        }
        steps.push(step);
    }
    Ok((steps, states, d))
}

pub fn load_chain_csv(path: impl AsRef<std::path::Path>) -> Result<(Vec<usize>, Vec<f64>, usize)> {
    read_chain_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests;
