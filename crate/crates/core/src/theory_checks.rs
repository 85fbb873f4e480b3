//! Pointwise numerical checks of the continuous-time equivalences between
//! map-preconditioned and Riemannian Langevin dynamics, the one-step
//! TMULA/EMRMLD discrepancy law and the rate formula for ULA.
//!
//! Equivalence residuals are computed from finite differences only (Jacobians
//! of T and divergences of B and P), so they check the analytic machinery in
//! `transport` rather than reuse it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::samplers::{emrmld_step, tmula_step, validate_skew, NoiseStream, StepWorkspace};
use crate::targets::LogDensity;
use crate::transport::{
    fd_divergence, inverse_hessians, log_det_identity_residual, pushforward_grad_log_density,
    Transport,
};

/// Default sampling box half-width for random check points.
pub const CHECK_BOX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub point: Vec<f64>,
    /// ‖A − B‖∞ / max(1, ‖B‖∞) for the mapped drift A and the Riemannian drift B.
    pub drift_residual: f64,
    /// max(‖J_T − J_S⁻¹‖∞, ‖J_T J_Tᵀ − B‖∞), J_T from differences of T.
    pub diffusion_residual: f64,
    /// max_k |Σ_{i,l} D_li ∂²T_k/∂xᵢ∂x_l|; zero without a skew matrix.
    pub skew_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn fd_step(v: &[f64], base: f64) -> f64 {
    base * (1.0 + linalg::inf_norm(v))
}

/// J_T(x) by central differences of the inverse map.
fn fd_inverse_jacobian(map: &dyn Transport, x: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut j = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..d {
        xp[i] = x[i] + step;
        xm[i] = x[i] - step;
        let tp = map.inverse(&xp)?;
        let tm = map.inverse(&xm)?;
        for k in 0..d {
            j[(k, i)] = (tp[k] - tm[k]) / (2.0 * step);
        }
        xp[i] = x[i];
        xm[i] = x[i];
    }
    Ok(j)
}

/// c_k = Σᵢ ∂(J_T)_{ki}/∂xᵢ at x by central differences of J_T = J_S(T(x))⁻¹.
fn fd_laplacian_of_inverse(map: &dyn Transport, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let d = x.len();
    let mut c = vec![0.0; d];
    let mut xs = x.to_vec();
    for i in 0..d {
        xs[i] = x[i] + step;
        let jp = jacobian_inverse(map, &map.inverse(&xs)?)?;
        xs[i] = x[i] - step;
        let jm = jacobian_inverse(map, &map.inverse(&xs)?)?;
        xs[i] = x[i];
        for k in 0..d {
            c[k] += (jp[(k, i)] - jm[(k, i)]) / (2.0 * step);
        }
    }
    Ok(c)
}

fn jacobian_inverse(map: &dyn Transport, y: &[f64]) -> Result<DMatrix<f64>> {
    map.jacobian(y)
        .try_inverse()
        .ok_or_else(|| Error::Step("singular Jacobian".into()))
}

fn drift_sides(
    target: &dyn LogDensity,
    map: &dyn Transport,
    skew: Option<&DMatrix<f64>>,
    y: &[f64],
    step: f64,
) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let d = y.len();
    let x = map.forward(y);
    let h = fd_step(&x, step);
    let jt = fd_inverse_jacobian(map, &x, h)?;
    let c = fd_laplacian_of_inverse(map, &x, h)?;
    let js_inv = jacobian_inverse(map, y)?;
    let gx = pushforward_grad_log_density(target, map, &x)?;
    let mut mixed = gx.clone();
    if let Some(dm) = skew {
        for i in 0..d {
            mixed[i] = gx[i] + (0..d).map(|j| dm[(i, j)] * gx[j]).sum::<f64>();
        }
    }
    let side_a: Vec<f64> = (0..d)
        .map(|k| (0..d).map(|i| js_inv[(k, i)] * mixed[i]).sum::<f64>() + c[k])
        .collect();

    // P(y) = J_S⁻¹ (I + D) J_S⁻ᵀ
    let p_of = |z: &[f64]| -> Result<DMatrix<f64>> {
        let ji = jacobian_inverse(map, z)?;
        let mid = match skew {
            Some(dm) => DMatrix::identity(d, d) + dm,
            None => DMatrix::identity(d, d),
        };
        Ok(&ji * mid * ji.transpose())
    };
    let p = p_of(y)?;
    let div = fd_divergence(y, fd_step(y, step), p_of)?;
    let g = target.grad_log_density(y);
    let side_b: Vec<f64> = (0..d)
        .map(|k| (0..d).map(|j| p[(k, j)] * g[j]).sum::<f64>() + div[k])
        .collect();
    Ok((side_a, side_b, jt, js_inv))
}

fn relative_residual(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    diff / linalg::inf_norm(b).max(1.0)
}

fn mat_inf(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn equivalence(
    target: &dyn LogDensity,
    map: &dyn Transport,
    skew: Option<&DMatrix<f64>>,
    y: &[f64],
    tol: f64,
) -> Result<EquivalenceReport> {
    let (a, b, jt, js_inv) = drift_sides(target, map, skew, y, 1e-5)?;
    let drift_residual = relative_residual(&a, &b);
    let bmat = &js_inv * js_inv.transpose();
    let diffusion_residual = mat_inf(&(&jt - &js_inv)).max(mat_inf(&(&jt * jt.transpose() - &bmat)))
        / mat_inf(&bmat).max(1.0);
    let skew_residual = match skew {
        Some(dm) => skew_cancellation_residual(map, dm, y)?,
        None => 0.0,
    };
    let pass = drift_residual <= tol && diffusion_residual <= tol && skew_residual <= 1e-8;
    Ok(EquivalenceReport {
        point: y.to_vec(),
        drift_residual,
        diffusion_residual,
        skew_residual,
        tolerance: tol,
        pass,
    })
}

/// Compares J_T∇ₓlog η(S(y)) + c(y) with B(y)∇log π(y) + ∇·B(y),
/// B = (J_SᵀJ_S)⁻¹.
pub fn check_tmrmld_equivalence(
    target: &dyn LogDensity,
    map: &dyn Transport,
    y: &[f64],
    tol: f64,
) -> Result<EquivalenceReport> {
    equivalence(target, map, None, y, tol)
}

/// Compares J_T(I + D)∇ₓlog η + c with P∇log π + ∇·P, P = B + J_T D J_Tᵀ,
/// and checks the skew cancellation.
pub fn check_giirr_equivalence(
    target: &dyn LogDensity,
    map: &dyn Transport,
    skew: &DMatrix<f64>,
    y: &[f64],
    tol: f64,
) -> Result<EquivalenceReport> {
    validate_skew(skew)?;
    if skew.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: skew.nrows(),
        });
    }
    equivalence(target, map, Some(skew), y, tol)
}

/// max_k |Σ_{i,l} D_li ∂²T_k/∂xᵢ∂x_l| at x = S(y).
pub fn skew_cancellation_residual(map: &dyn Transport, skew: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let hs = inverse_hessians(map, y)?;
    let d = y.len();
    let mut worst: f64 = 0.0;
    for h in &hs {
        let mut acc = 0.0;
        for i in 0..d {
            for l in 0..d {
                acc += skew[(l, i)] * h[(i, l)];
            }
        }
        worst = worst.max(acc.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepReport {
    pub h: f64,
    pub samples: usize,
    pub mc_estimate: f64,
    /// h²[Σ_{i,j}(∂²Tᵢ/∂xⱼ²)² + Σ_{i,j,l}(∂²Tᵢ/∂xⱼ∂x_l)²].
    pub closed_form: f64,
    /// h² · 2Σᵢ‖∇²Tᵢ‖²_F, the exact second moment of the leading term.
    pub gaussian_moment_form: f64,
    pub rel_err: f64,
}

/// Second-derivative sums (diagonal-only, all entries) of T at x = S(y).
pub fn second_derivative_sums(map: &dyn Transport, y: &[f64]) -> Result<(f64, f64)> {
    let hs = inverse_hessians(map, y)?;
    let mut diag = 0.0;
    let mut all = 0.0;
    for h in &hs {
        for j in 0..h.nrows() {
            diag += h[(j, j)].powi(2);
            for l in 0..h.ncols() {
                all += h[(j, l)].powi(2);
            }
        }
    }
    Ok((diag, all))
}

/// Monte Carlo E‖F_TMULA − F_EMRMLD‖² from a common y and common noise,
/// against the closed-form h² coefficient.
pub fn onestep_discrepancy(
    target: &dyn LogDensity,
    map: &dyn Transport,
    y: &[f64],
    h: f64,
    n_mc: usize,
    seed: u64,
) -> Result<OneStepReport> {
    if n_mc == 0 || !(h > 0.0) {
        return Err(Error::InvalidParameter("need n_mc ≥ 1 and h > 0".into()));
    }
    let d = y.len();
    let x = map.forward(y);
    let mut ws = StepWorkspace::new(d);
    let mut noise = NoiseStream::new(seed, 0);
    let mut xi = vec![0.0; d];
    let (mut xo, mut yt, mut ye) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut acc = 0.0;
    for _ in 0..n_mc {
        noise.fill(&mut xi);
        tmula_step(target, map, &x, y, h, &xi, &mut ws, &mut xo, &mut yt)?;
        emrmld_step(target, map, y, h, &xi, &mut ws, &mut ye)?;
        acc += yt.iter().zip(&ye).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    let mc = acc / n_mc as f64;
    let (diag, all) = second_derivative_sums(map, y)?;
    let closed = h * h * (diag + all);
    let gaussian = h * h * 2.0 * all;
    let rel_err = if closed > 0.0 {
        (mc - closed).abs() / closed
    } else {
        mc.abs()
    };
    Ok(OneStepReport {
        h,
        samples: n_mc,
        mc_estimate: mc,
        closed_form: closed,
        gaussian_moment_form: gaussian,
        rel_err,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r: f64,
    pub dr_dl: f64,
}

/// r(L) = 1 − mL/(m + L)² and ∂r/∂L = m(L − m)/(m + L)³.
pub fn optimal_rate(m: f64, l: f64) -> Result<RateReport> {
    if !(m > 0.0) || !(l >= m) || !l.is_finite() {
        return Err(Error::InvalidParameter(format!("need 0 < m ≤ L (got m = {m}, L = {l})")));
    }
    let s = m + l;
    Ok(RateReport {
        r: 1.0 - m * l / (s * s),
        dr_dl: m * (l - m) / (s * s * s),
    })
}

/// max over reference points x of ‖J_T(x)‖_F, a lower bound on 1/ρ.
pub fn jacobian_bound_estimate(map: &dyn Transport, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points".into()));
    }
    let mut worst: f64 = 0.0;
    for x in points {
        let y = map.inverse(x)?;
        let jt = jacobian_inverse(map, &y)?;
        worst = worst.max(jt.norm());
    }
    Ok(worst)
}

/// Uniform points in [−half, half]^d from the deterministic noise source.
pub fn box_points(d: usize, count: usize, half: f64, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..d).map(|_| rng.gen_range(-half..half)).collect())
        .collect()
}

/// Result of one named check inside a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Tmrmld,
    Giirr,
    Onestep,
    Rate,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Suite> {
        match s {
            "tmrmld" => Ok(Suite::Tmrmld),
            "giirr" => Ok(Suite::Giirr),
            "onestep" => Ok(Suite::Onestep),
            "rate" => Ok(Suite::Rate),
            _ => Err(Error::Config(format!(
                "unknown suite {s:?} (expected tmrmld, giirr, onestep or rate)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tmrmld => "tmrmld",
            Suite::Giirr => "giirr",
            Suite::Onestep => "onestep",
            Suite::Rate => "rate",
        }
    }
}

fn check(name: impl Into<String>, value: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

/// Matched (target, exact map) pairs used by the equivalence suites.
fn matched_pairs() -> Result<Vec<(&'static str, crate::targets::TargetDensity)>> {
    use crate::targets::TargetSpec;
    Ok(vec![
        ("banana", TargetSpec::reference_banana().build()?),
        ("rosenbrock", TargetSpec::reference_rosenbrock().build()?),
    ])
}

/// Runs a verification suite. `points` controls the number of random points
/// for equivalence suites and `n_mc` the Monte Carlo size for `onestep`.
pub fn run_suite(suite: Suite, seed: u64, points: usize, n_mc: usize) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    match suite {
        Suite::Tmrmld | Suite::Giirr => {
            for (name, target) in matched_pairs()? {
                let map = target.exact_map.as_ref().expect("matched targets carry exact maps");
                let d = target.dim;
                let skew = if suite == Suite::Giirr {
                    let mut m = DMatrix::zeros(d, d);
                    for i in 0..d {
                        for j in i + 1..d {
                            let v = 1.0 / (1.0 + (j - i) as f64);
                            m[(i, j)] = v;
                            m[(j, i)] = -v;
                        }
                    }
                    Some(m)
                } else {
                    None
                };
                let (mut drift, mut diff, mut skew_res, mut logdet): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
                for y in box_points(d, points, CHECK_BOX, seed) {
                    let r = match &skew {
                        Some(s) => check_giirr_equivalence(&target, map, s, &y, 1e-5)?,
                        None => check_tmrmld_equivalence(&target, map, &y, 1e-5)?,
                    };
                    drift = drift.max(r.drift_residual);
                    diff = diff.max(r.diffusion_residual);
                    skew_res = skew_res.max(r.skew_residual);
                    logdet = logdet.max(log_det_identity_residual(map, &y, 1e-5)?);
                }
                checks.push(check(format!("{name}.drift_residual"), drift, 1e-5));
                checks.push(check(format!("{name}.diffusion_residual"), diff, 1e-5));
                checks.push(check(format!("{name}.log_det_identity"), logdet, 1e-6));
                if skew.is_some() {
                    checks.push(check(format!("{name}.skew_cancellation"), skew_res, 1e-8));
                }
            }
        }
        Suite::Onestep => {
            let target = crate::targets::TargetSpec::reference_banana().build()?;
            let map = target.exact_map.as_ref().expect("banana has an exact map");
            let y = [1.0, 1.2];
            let a = onestep_discrepancy(&target, map, &y, 1e-3, n_mc, seed)?;
            let b = onestep_discrepancy(&target, map, &y, 5e-4, n_mc, seed)?;
            checks.push(check("banana.closed_form_rel_err", a.rel_err, 0.05));
            let ratio = a.mc_estimate / b.mc_estimate;
            checks.push(check("banana.halving_ratio_deviation", (ratio - 4.0).abs(), 0.4));
        }
        Suite::Rate => {
            let r = optimal_rate(1.0, 1.0)?;
            checks.push(check("rate.m1_l1_is_three_quarters", (r.r - 0.75).abs(), 0.0));
            checks.push(check("rate.m1_l1_derivative", r.dr_dl.abs(), 0.0));
            let mut prev = r.r;
            let mut violations = 0.0;
            for i in 1..=20 {
                let l = 1.0 + 0.5 * i as f64;
                let q = optimal_rate(1.0, l)?;
                if !(q.r > prev) || !(q.dr_dl > 0.0) {
                    violations += 1.0;
                }
                prev = q.r;
            }
            checks.push(check("rate.strictly_increasing_in_l", violations, 0.0));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        suite: suite.name().to_string(),
        seed,
        checks,
        pass,
    })
}
