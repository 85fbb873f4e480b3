//! Invertible transport maps S (reference ← target) and their inverses T = S⁻¹.
//!
//! Matrices crossing the [`Transport`] trait are row-major `d × d` slices so
//! that sampler hot loops can reuse buffers.

mod analytic;
mod composed;
mod io;
mod triangular;

use std::fmt;

use nalgebra::DMatrix;

pub use analytic::{AffineMap, BananaMap, RosenbrockMap};
pub use composed::ComposedMap;
pub use io::{load_map, map_from_json, map_to_json, save_map, MAP_FORMAT_VERSION};
pub use triangular::{MonotoneComponent, Rectifier, TriangularMap};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::targets::LogDensity;

/// An invertible, twice differentiable map S: R^d → R^d.
pub trait Transport: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// True when every Jacobian is lower triangular with positive diagonal.
    fn is_lower_triangular(&self) -> bool {
        false
    }

    /// True when S is affine (all second derivatives vanish).
    fn is_affine(&self) -> bool {
        false
    }

    fn forward_into(&self, y: &[f64], out: &mut [f64]);

    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// J_S(y), row-major.
    fn jacobian_into(&self, y: &[f64], jac: &mut [f64]);

    fn log_det_jacobian(&self, y: &[f64]) -> f64;

    /// ∇²S_k(y), row-major. Defaults to central differences of the Jacobian.
    fn component_hessian_into(&self, k: usize, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if self.is_affine() {
            out[..d * d].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let step = 1e-5 * (1.0 + linalg::inf_norm(y));
        let mut yp = y.to_vec();
        let mut jp = vec![0.0; d * d];
        let mut jm = vec![0.0; d * d];
        for j in 0..d {
            yp[j] = y[j] + step;
            self.jacobian_into(&yp, &mut jp);
            yp[j] = y[j] - step;
            self.jacobian_into(&yp, &mut jm);
            yp[j] = y[j];
            for i in 0..d {
                out[i * d + j] = (jp[k * d + i] - jm[k * d + i]) / (2.0 * step);
            }
        }
        // symmetrize away the O(step²) asymmetry
        for i in 0..d {
            for j in 0..i {
                let m = 0.5 * (out[i * d + j] + out[j * d + i]);
                out[i * d + j] = m;
                out[j * d + i] = m;
            }
        }
    }

    /// ∇_y log det J_S(y).
    fn grad_log_det_into(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if self.is_affine() {
            out[..d].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let mut jac = vec![0.0; d * d];
        let mut inv = vec![0.0; d * d];
        let mut scratch = vec![0.0; d * d];
        let mut hess = vec![0.0; d * d];
        self.jacobian_into(y, &mut jac);
        if self.is_lower_triangular() {
            linalg::invert_lower(&jac, d, &mut inv);
        } else if linalg::invert_general(&jac, d, &mut inv, &mut scratch).is_err() {
            out[..d].iter_mut().for_each(|v| *v = f64::NAN);
            return;
        }
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        // ∂_j log det J = Σ_{k,m} (J⁻¹)_{mk} ∂²S_k/∂y_m∂y_j
        for k in 0..d {
            self.component_hessian_into(k, y, &mut hess);
            for m in 0..d {
                let w = inv[m * d + k];
                if w != 0.0 {
                    for j in 0..d {
                        out[j] += w * hess[m * d + j];
                    }
                }
            }
        }
    }

    fn forward(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.forward_into(y, &mut out);
        out
    }

    fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; self.dim()];
        self.inverse_into(x, &mut out)?;
        Ok(out)
    }

    fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = vec![0.0; d * d];
        self.jacobian_into(y, &mut j);
        linalg::to_dmatrix(&j, d)
    }

    fn grad_log_det(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_log_det_into(y, &mut out);
        out
    }

    fn component_hessian(&self, k: usize, y: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = vec![0.0; d * d];
        self.component_hessian_into(k, y, &mut h);
        linalg::to_dmatrix(&h, d)
    }

    /// H_k(y) = ∇_y(∂S_k/∂y_k) for k = 0..d.
    fn component_hessian_vectors(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut h = vec![0.0; d * d];
        (0..d)
            .map(|k| {
                self.component_hessian_into(k, y, &mut h);
                (0..d).map(|j| h[k * d + j]).collect()
            })
            .collect()
    }
}

/// A concrete, serializable transport map.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportMap {
    Affine(AffineMap),
    Banana(BananaMap),
    Rosenbrock(RosenbrockMap),
    Triangular(TriangularMap),
    Composed(Box<ComposedMap>),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            TransportMap::Affine($m) => $e,
            TransportMap::Banana($m) => $e,
            TransportMap::Rosenbrock($m) => $e,
            TransportMap::Triangular($m) => $e,
            TransportMap::Composed($m) => $e,
        }
    };
}

impl Transport for TransportMap {
    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }
    fn is_lower_triangular(&self) -> bool {
        dispatch!(self, m => m.is_lower_triangular())
    }
    fn is_affine(&self) -> bool {
        dispatch!(self, m => m.is_affine())
    }
    fn forward_into(&self, y: &[f64], out: &mut [f64]) {
        dispatch!(self, m => m.forward_into(y, out))
    }
    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        dispatch!(self, m => m.inverse_into(x, out))
    }
    fn jacobian_into(&self, y: &[f64], jac: &mut [f64]) {
        dispatch!(self, m => m.jacobian_into(y, jac))
    }
    fn log_det_jacobian(&self, y: &[f64]) -> f64 {
        dispatch!(self, m => m.log_det_jacobian(y))
    }
    fn component_hessian_into(&self, k: usize, y: &[f64], out: &mut [f64]) {
        dispatch!(self, m => m.component_hessian_into(k, y, out))
    }
    fn grad_log_det_into(&self, y: &[f64], out: &mut [f64]) {
        dispatch!(self, m => m.grad_log_det_into(y, out))
    }
}

impl TransportMap {
    pub fn identity(dim: usize) -> Self {
        TransportMap::Affine(AffineMap::identity(dim))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TransportMap::Affine(_) => "affine",
            TransportMap::Banana(_) => "banana",
            TransportMap::Rosenbrock(_) => "rosenbrock",
            TransportMap::Triangular(_) => "triangular",
            TransportMap::Composed(_) => "composed",
        }
    }
}

/// The exact normalizing map of the banana target.
pub fn banana_map(s: f64, b: f64) -> Result<TransportMap> {
    Ok(TransportMap::Banana(BananaMap::new(s, b)?))
}

/// outer ∘ inner.
pub fn compose(outer: TransportMap, inner: TransportMap) -> Result<TransportMap> {
    Ok(TransportMap::Composed(Box::new(ComposedMap::new(outer, inner)?)))
}

/// Scratch buffers for map evaluations inside sampler loops.
#[derive(Debug, Clone)]
pub struct MapWorkspace {
    pub d: usize,
    pub y: Vec<f64>,
    pub grad: Vec<f64>,
    pub gld: Vec<f64>,
    pub jac: Vec<f64>,
    pub jinv: Vec<f64>,
    pub scratch: Vec<f64>,
    pub hess: Vec<f64>,
    pub tmp: Vec<f64>,
}

impl MapWorkspace {
    pub fn new(d: usize) -> Self {
        MapWorkspace {
            d,
            y: vec![0.0; d],
            grad: vec![0.0; d],
            gld: vec![0.0; d],
            jac: vec![0.0; d * d],
            jinv: vec![0.0; d * d],
            scratch: vec![0.0; d * d],
            hess: vec![0.0; d * d],
            tmp: vec![0.0; d],
        }
    }
}

/// Inverts `ws.jac` into `ws.jinv`, using triangular structure when available.
pub(crate) fn invert_jacobian(map: &dyn Transport, ws: &mut MapWorkspace) -> Result<()> {
    let d = ws.d;
    if map.is_lower_triangular() {
        linalg::invert_lower(&ws.jac, d, &mut ws.jinv);
        Ok(())
    } else {
        linalg::invert_general(&ws.jac, d, &mut ws.jinv, &mut ws.scratch)
    }
}

/// ∇ₓ log η(x) for η = S♯π, writing T(x) into `ws.y` as a by-product.
///
/// Uses ∇ₓ log η(x) = J_S⁻ᵀ(y)(∇log π(y) − ∇ log det J_S(y)) with y = T(x).
pub fn pushforward_grad_into(
    target: &dyn LogDensity,
    map: &dyn Transport,
    x: &[f64],
    ws: &mut MapWorkspace,
    out: &mut [f64],
) -> Result<()> {
    map.inverse_into(x, &mut ws.y)?;
    pushforward_grad_from_y(target, map, ws, out)
}

/// As [`pushforward_grad_into`] with y = T(x) already stored in `ws.y`.
pub(crate) fn pushforward_grad_from_y(
    target: &dyn LogDensity,
    map: &dyn Transport,
    ws: &mut MapWorkspace,
    out: &mut [f64],
) -> Result<()> {
    let d = ws.d;
    target.grad_log_density_into(&ws.y, &mut ws.grad);
    map.jacobian_into(&ws.y, &mut ws.jac);
    if map.is_affine() {
        ws.gld.iter_mut().for_each(|v| *v = 0.0);
    } else {
        map.grad_log_det_into(&ws.y, &mut ws.gld);
    }
    for i in 0..d {
        out[i] = ws.grad[i] - ws.gld[i];
    }
    if map.is_lower_triangular() {
        linalg::solve_lower_transpose_in_place(&ws.jac, &mut out[..d]);
    } else {
        linalg::invert_general(&ws.jac, d, &mut ws.jinv, &mut ws.scratch)?;
        ws.tmp.copy_from_slice(&out[..d]);
        linalg::mat_t_vec(&ws.jinv, &ws.tmp, &mut out[..d]);
    }
    if out[..d].iter().any(|v| !v.is_finite()) {
        return Err(Error::Step("non-finite pushforward gradient".into()));
    }
    Ok(())
}

/// ∇ₓ log η(x) for η = S♯π.
pub fn pushforward_grad_log_density(
    target: &dyn LogDensity,
    map: &dyn Transport,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dim(map.dim(), x.len())?;
    check_dim(map.dim(), target.dim())?;
    let mut ws = MapWorkspace::new(map.dim());
    let mut out = vec![0.0; map.dim()];
    pushforward_grad_into(target, map, x, &mut ws, &mut out)?;
    Ok(out)
}

/// The pushforward density η = S♯π, log η(x) = log π(T(x)) + log det J_T(x).
#[derive(Debug, Clone, Copy)]
pub struct PushforwardDensity<'a> {
    pub base_target: &'a dyn LogDensity,
    pub map: &'a dyn Transport,
}

impl fmt::Debug for dyn LogDensity + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogDensity(dim = {})", self.dim())
    }
}

impl<'a> PushforwardDensity<'a> {
    pub fn new(base_target: &'a dyn LogDensity, map: &'a dyn Transport) -> Result<Self> {
        check_dim(map.dim(), base_target.dim())?;
        Ok(PushforwardDensity { base_target, map })
    }

    pub fn try_log_density(&self, x: &[f64]) -> Result<f64> {
        let y = self.map.inverse(x)?;
        Ok(self.base_target.log_density(&y) - self.map.log_det_jacobian(&y))
    }
}

impl LogDensity for PushforwardDensity<'_> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    /// Returns −∞ where the inverse map cannot be evaluated.
    fn log_density(&self, x: &[f64]) -> f64 {
        self.try_log_density(x).unwrap_or(f64::NEG_INFINITY)
    }

    /// Fills with NaN where the inverse map cannot be evaluated.
    fn grad_log_density_into(&self, x: &[f64], grad: &mut [f64]) {
        let mut ws = MapWorkspace::new(self.dim());
        if pushforward_grad_into(self.base_target, self.map, x, &mut ws, grad).is_err() {
            grad.iter_mut().for_each(|v| *v = f64::NAN);
        }
    }
}

/// ∇²T_k(x) at x = S(y), from the forward Hessians:
/// ∇²T_k = −Σ_m (J_T)_{km} J_Tᵀ ∇²S_m J_T.
pub fn inverse_hessians(map: &dyn Transport, y: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let d = map.dim();
    let mut ws = MapWorkspace::new(d);
    map.jacobian_into(y, &mut ws.jac);
    invert_jacobian(map, &mut ws)?;
    let jt = linalg::to_dmatrix(&ws.jinv, d);
    let mut out = vec![DMatrix::zeros(d, d); d];
    if map.is_affine() {
        return Ok(out);
    }
    for m in 0..d {
        let hm = map.component_hessian(m, y);
        let core = jt.transpose() * hm * &jt;
        for (k, o) in out.iter_mut().enumerate() {
            let w = jt[(k, m)];
            if w != 0.0 {
                *o -= &core * w;
            }
        }
    }
    Ok(out)
}

/// c(y) with c_k = Σᵢ ∂²T_k/∂xᵢ² evaluated at x = S(y), written into `out`.
///
/// Expects `ws.jac` and `ws.jinv` to hold J_S(y) and its inverse.
pub(crate) fn inverse_laplacian_into(
    map: &dyn Transport,
    y: &[f64],
    ws: &mut MapWorkspace,
    out: &mut [f64],
) {
    let d = ws.d;
    if map.is_affine() {
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    // t_m = tr(J_Tᵀ H_m J_T) = ⟨H_m, J_T J_Tᵀ⟩_F, then c = −J_T t
    for m in 0..d {
        map.component_hessian_into(m, y, &mut ws.hess);
        let mut t = 0.0;
        for a in 0..d {
            for b in 0..d {
                let h = ws.hess[a * d + b];
                if h != 0.0 {
                    let mut bab = 0.0;
                    for i in 0..d {
                        bab += ws.jinv[a * d + i] * ws.jinv[b * d + i];
                    }
                    t += h * bab;
                }
            }
        }
        ws.tmp[m] = -t;
    }
    linalg::mat_vec(&ws.jinv, &ws.tmp, out);
}

/// c(y) with c_k = Σᵢ ∂²T_k/∂xᵢ² at x = S(y).
pub fn inverse_laplacian(map: &dyn Transport, y: &[f64]) -> Result<Vec<f64>> {
    let d = map.dim();
    let mut ws = MapWorkspace::new(d);
    map.jacobian_into(y, &mut ws.jac);
    invert_jacobian(map, &mut ws)?;
    let mut out = vec![0.0; d];
    inverse_laplacian_into(map, y, &mut ws, &mut out);
    Ok(out)
}

/// ∇·B(y) for the metric B = (J_SᵀJ_S)⁻¹, via ∇·B = c − B ∇ log det J_S.
///
/// Expects `ws.jac`/`ws.jinv` to be filled for y. Uses `ws.gld` and `ws.tmp`.
pub(crate) fn metric_divergence_into(
    map: &dyn Transport,
    y: &[f64],
    ws: &mut MapWorkspace,
    out: &mut [f64],
) {
    let d = ws.d;
    if map.is_affine() {
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    inverse_laplacian_into(map, y, ws, out);
    map.grad_log_det_into(y, &mut ws.gld);
    // B g = J_T (J_Tᵀ g)
    linalg::mat_t_vec(&ws.jinv, &ws.gld, &mut ws.tmp);
    for k in 0..d {
        let mut acc = 0.0;
        for i in 0..d {
            acc += ws.jinv[k * d + i] * ws.tmp[i];
        }
        out[k] -= acc;
    }
}

/// ∇·B(y) for B = (J_SᵀJ_S)⁻¹ from analytic map second derivatives.
pub fn metric_divergence(map: &dyn Transport, y: &[f64]) -> Result<Vec<f64>> {
    let d = map.dim();
    let mut ws = MapWorkspace::new(d);
    map.jacobian_into(y, &mut ws.jac);
    invert_jacobian(map, &mut ws)?;
    let mut out = vec![0.0; d];
    metric_divergence_into(map, y, &mut ws, &mut out);
    Ok(out)
}

/// B(y) = (J_SᵀJ_S)⁻¹ = J_T J_Tᵀ.
pub fn metric(map: &dyn Transport, y: &[f64]) -> Result<DMatrix<f64>> {
    let d = map.dim();
    let mut ws = MapWorkspace::new(d);
    map.jacobian_into(y, &mut ws.jac);
    invert_jacobian(map, &mut ws)?;
    let jt = linalg::to_dmatrix(&ws.jinv, d);
    Ok(&jt * jt.transpose())
}

/// ∇·M(y) by central differences, for any matrix field M (row-wise divergence).
pub fn fd_divergence<F>(y: &[f64], step: f64, field: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let d = y.len();
    let mut out = vec![0.0; d];
    let mut yp = y.to_vec();
    for j in 0..d {
        yp[j] = y[j] + step;
        let mp = field(&yp)?;
        yp[j] = y[j] - step;
        let mm = field(&yp)?;
        yp[j] = y[j];
        for (k, o) in out.iter_mut().enumerate() {
            *o += (mp[(k, j)] - mm[(k, j)]) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Residual of ∇ log det J_S + J_Sᵀ(∇·J_S⁻ᵀ) at y, with the divergence taken by
/// central differences of step `step`. Returns the Euclidean norm.
pub fn log_det_identity_residual(map: &dyn Transport, y: &[f64], step: f64) -> Result<f64> {
    let d = map.dim();
    let div = fd_divergence(y, step, |p| {
        let j = map.jacobian(p);
        j.try_inverse()
            .map(|inv| inv.transpose())
            .ok_or_else(|| Error::Step("singular Jacobian".into()))
    })?;
    let jac = map.jacobian(y);
    let gld = map.grad_log_det(y);
    let corr = jac.transpose() * nalgebra::DVector::from_vec(div);
    Ok((0..d).map(|i| (gld[i] + corr[i]).powi(2)).sum::<f64>().sqrt())
}
