use serde::{Deserialize, Serialize};

use super::Transport;
use crate::basis::{unit_interval_rule, BasisKind};
use crate::error::{Error, Result};

/// Strictly positive rectifier g applied to ∂_k f.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rectifier {
    /// log(1 + e^z); exactly z above 30 and e^z below −30.
    #[default]
    Softplus,
    /// z + 1 for z > 0, e^z otherwise.
    ShiftedElu,
}

impl Rectifier {
    #[inline]
    pub fn g(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus => {
                if z > 30.0 {
                    z
                } else if z < -30.0 {
                    z.exp()
                } else {
                    z.exp().ln_1p()
                }
            }
            Rectifier::ShiftedElu => {
                if z > 0.0 {
                    z + 1.0
                } else {
                    z.exp()
                }
            }
        }
    }

    #[inline]
    pub fn dg(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus => {
                if z > 30.0 {
                    1.0
                } else if z < -30.0 {
                    z.exp()
                } else {
                    1.0 / (1.0 + (-z).exp())
                }
            }
            Rectifier::ShiftedElu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }

    #[inline]
    pub fn d2g(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus => {
                if z > 30.0 {
                    0.0
                } else if z < -30.0 {
                    z.exp()
                } else {
                    let s = 1.0 / (1.0 + (-z).exp());
                    s * (1.0 - s)
                }
            }
            Rectifier::ShiftedElu => {
                if z > 0.0 {
                    0.0
                } else {
                    z.exp()
                }
            }
        }
    }

    #[inline]
    pub fn log_g(&self, z: f64) -> f64 {
        match self {
            Rectifier::Softplus if z < -30.0 => z,
            Rectifier::ShiftedElu if z <= 0.0 => z,
            _ => self.g(z).ln(),
        }
    }

    /// The z with g(z) = 1.
    pub fn unit_preimage(&self) -> f64 {
        match self {
            Rectifier::Softplus => (std::f64::consts::E - 1.0).ln(),
            Rectifier::ShiftedElu => 0.0,
        }
    }
}

/// Component k of a triangular map:
/// S_k(y) = f(y_{<k}, 0) + ∫₀^{y_k} g(∂_k f(y_{<k}, t)) dt with f = Σ_α c_α Π_j φ_{α_j}(y_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneComponent {
    pub index: usize,
    pub multi_indices: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
    pub rectifier: Rectifier,
}

impl MonotoneComponent {
    pub fn validate(&self) -> Result<()> {
        let k = self.index;
        if self.multi_indices.len() != self.coefficients.len() {
            return Err(Error::InvalidParameter(format!(
                "component {k}: {} multi-indices but {} coefficients",
                self.multi_indices.len(),
                self.coefficients.len()
            )));
        }
        if self.multi_indices.iter().any(|a| a.len() != k + 1) {
            return Err(Error::InvalidParameter(format!(
                "component {k}: multi-indices must have length {}",
                k + 1
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("component {k}: non-finite coefficient")));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.multi_indices
            .iter()
            .flat_map(|a| a.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Per-point reduction of a component: coefficients grouped by the power of y_k.
pub(crate) struct Reduced {
    /// a_n = Σ_{α: α_k = n} c_α Π_{j<k} φ_{α_j}(y_j)
    pub a: Vec<f64>,
    /// da[j][n] = ∂a_n/∂y_j for j < k
    pub da: Vec<Vec<f64>>,
}

/// Lower-triangular monotone map built from rectified-integral components.
#[derive(Debug, Clone)]
pub struct TriangularMap {
    dim: usize,
    pub basis: BasisKind,
    pub quadrature_points: usize,
    pub components: Vec<MonotoneComponent>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    orders: Vec<usize>,
}

impl PartialEq for TriangularMap {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.basis == other.basis
            && self.quadrature_points == other.quadrature_points
            && self.components == other.components
    }
}

const INVERSION_TOL: f64 = 1e-12;
const MAX_BRACKET_DOUBLINGS: usize = 60;

impl TriangularMap {
    pub fn new(
        basis: BasisKind,
        quadrature_points: usize,
        components: Vec<MonotoneComponent>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("triangular map needs components".into()));
        }
        if quadrature_points < 1 {
            return Err(Error::InvalidParameter("quadrature needs at least one point".into()));
        }
        for (k, c) in components.iter().enumerate() {
            if c.index != k {
                return Err(Error::InvalidParameter(format!(
                    "component {k} carries index {}",
                    c.index
                )));
            }
            c.validate()?;
        }
        let (nodes, weights) = unit_interval_rule(quadrature_points);
        let orders = components.iter().map(|c| c.order()).collect();
        Ok(TriangularMap {
            dim: components.len(),
            basis,
            quadrature_points,
            components,
            nodes,
            weights,
            orders,
        })
    }

    pub fn quadrature(&self) -> (&[f64], &[f64]) {
        (&self.nodes, &self.weights)
    }

    fn basis_table(&self, y: &[f64], upto: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
        let w = order + 1;
        let mut v = vec![0.0; upto * w];
        let mut d1 = vec![0.0; upto * w];
        let mut d2 = vec![0.0; w];
        for j in 0..upto {
            self.basis.eval(
                y[j],
                order,
                &mut v[j * w..(j + 1) * w],
                &mut d1[j * w..(j + 1) * w],
                &mut d2,
            );
        }
        (v, d1)
    }

    pub(crate) fn reduce(&self, k: usize, prefix: &[f64], with_derivs: bool) -> Reduced {
        let comp = &self.components[k];
        let p = self.orders[k];
        let w = p + 1;
        let (v, d1) = self.basis_table(prefix, k, p);
        let mut a = vec![0.0; w];
        let mut da = if with_derivs {
            vec![vec![0.0; w]; k]
        } else {
            Vec::new()
        };
        for (alpha, c) in comp.multi_indices.iter().zip(&comp.coefficients) {
            let mut prod = *c;
            for j in 0..k {
                prod *= v[j * w + alpha[j]];
            }
            a[alpha[k]] += prod;
            if with_derivs {
                for (j, daj) in da.iter_mut().enumerate() {
                    let mut pd = *c * d1[j * w + alpha[j]];
                    for i in 0..k {
                        if i != j {
                            pd *= v[i * w + alpha[i]];
                        }
                    }
                    daj[alpha[k]] += pd;
                }
            }
        }
        Reduced { a, da }
    }

    /// (value, ∂value/∂y_k) of component k at (prefix, y_k).
    pub fn component_eval(&self, k: usize, prefix: &[f64], yk: f64) -> (f64, f64) {
        let red = self.reduce(k, prefix, false);
        self.eval_reduced(k, &red.a, yk)
    }

    pub(crate) fn eval_reduced(&self, k: usize, a: &[f64], yk: f64) -> (f64, f64) {
        let p = self.orders[k];
        let g = self.components[k].rectifier;
        let w = p + 1;
        let mut v = vec![0.0; w];
        let mut d1 = vec![0.0; w];
        let mut d2 = vec![0.0; w];
        self.basis.eval(0.0, p, &mut v, &mut d1, &mut d2);
        let f0: f64 = a.iter().zip(&v).map(|(a, v)| a * v).sum();
        let mut integral = 0.0;
        for (t, wq) in self.nodes.iter().zip(&self.weights) {
            self.basis.eval(t * yk, p, &mut v, &mut d1, &mut d2);
            let dk: f64 = a.iter().zip(&d1).map(|(a, d)| a * d).sum();
            integral += wq * g.g(dk);
        }
        self.basis.eval(yk, p, &mut v, &mut d1, &mut d2);
        let dk: f64 = a.iter().zip(&d1).map(|(a, d)| a * d).sum();
        (f0 + yk * integral, g.g(dk))
    }

    fn invert_component(&self, k: usize, a: &[f64], target: f64) -> Result<f64> {
        let fail = |reason: String| Error::InversionFailure {
            component: k,
            reason,
        };
        if !target.is_finite() {
            return Err(fail("non-finite reference coordinate".into()));
        }
        let resid = |t: f64| {
            let (v, dv) = self.eval_reduced(k, a, t);
            (v - target, dv)
        };
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let (mut flo, _) = resid(lo);
        let mut n = 0;
        while flo > 0.0 {
            n += 1;
            if n > MAX_BRACKET_DOUBLINGS || !flo.is_finite() {
                return Err(fail("lower bracket not found".into()));
            }
            hi = lo;
            lo *= 2.0;
            flo = resid(lo).0;
        }
        let (mut fhi, _) = resid(hi);
        n = 0;
        while fhi < 0.0 {
            n += 1;
            if n > MAX_BRACKET_DOUBLINGS || !fhi.is_finite() {
                return Err(fail("upper bracket not found".into()));
            }
            lo = hi;
            hi *= 2.0;
            fhi = resid(hi).0;
        }
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (f, df) = resid(t);
            if !f.is_finite() {
                return Err(fail("non-finite residual".into()));
            }
            if f.abs() <= INVERSION_TOL {
                return Ok(t);
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
                return Ok(t);
            }
            let newton = t - f / df;
            t = if df > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(fail("root iteration limit reached".into()))
    }

    /// ∇_y ∂_kS_k(y) and the diagonal derivative ∂_kS_k(y).
    fn diag_gradient(&self, k: usize, y: &[f64], out: &mut [f64]) -> f64 {
        let red = self.reduce(k, &y[..k], true);
        let p = self.orders[k];
        let g = self.components[k].rectifier;
        let w = p + 1;
        let mut v = vec![0.0; w];
        let mut d1 = vec![0.0; w];
        let mut d2 = vec![0.0; w];
        self.basis.eval(y[k], p, &mut v, &mut d1, &mut d2);
        let dk: f64 = red.a.iter().zip(&d1).map(|(a, d)| a * d).sum();
        let gp = g.dg(dk);
        for j in 0..k {
            out[j] = gp * red.da[j].iter().zip(&d1).map(|(a, d)| a * d).sum::<f64>();
        }
        out[k] = gp * red.a.iter().zip(&d2).map(|(a, d)| a * d).sum::<f64>();
        for o in out.iter_mut().skip(k + 1) {
            *o = 0.0;
        }
        g.g(dk)
    }
}

impl Transport for TriangularMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn is_lower_triangular(&self) -> bool {
        true
    }
    fn forward_into(&self, y: &[f64], out: &mut [f64]) {
        for k in 0..self.dim {
            out[k] = self.component_eval(k, &y[..k], y[k]).0;
        }
    }
    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for k in 0..self.dim {
            let red = self.reduce(k, &out[..k], false);
            out[k] = self.invert_component(k, &red.a, x[k])?;
        }
        Ok(())
    }
    fn jacobian_into(&self, y: &[f64], jac: &mut [f64]) {
        let d = self.dim;
        jac[..d * d].iter_mut().for_each(|v| *v = 0.0);
        for k in 0..d {
            let red = self.reduce(k, &y[..k], true);
            let p = self.orders[k];
            let g = self.components[k].rectifier;
            let w = p + 1;
            let mut v = vec![0.0; w];
            let mut d1 = vec![0.0; w];
            let mut d2 = vec![0.0; w];
            let yk = y[k];
            if k > 0 {
                self.basis.eval(0.0, p, &mut v, &mut d1, &mut d2);
                for j in 0..k {
                    jac[k * d + j] = red.da[j].iter().zip(&v).map(|(a, v)| a * v).sum();
                }
                let mut acc = vec![0.0; k];
                for (t, wq) in self.nodes.iter().zip(&self.weights) {
                    self.basis.eval(t * yk, p, &mut v, &mut d1, &mut d2);
                    let dk: f64 = red.a.iter().zip(&d1).map(|(a, d)| a * d).sum();
                    let gp = wq * g.dg(dk);
                    for j in 0..k {
                        acc[j] += gp * red.da[j].iter().zip(&d1).map(|(a, d)| a * d).sum::<f64>();
                    }
                }
                for j in 0..k {
                    jac[k * d + j] += yk * acc[j];
                }
            }
            self.basis.eval(yk, p, &mut v, &mut d1, &mut d2);
            let dk: f64 = red.a.iter().zip(&d1).map(|(a, d)| a * d).sum();
            jac[k * d + k] = g.g(dk);
        }
    }
    fn log_det_jacobian(&self, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.dim {
            let red = self.reduce(k, &y[..k], false);
            let p = self.orders[k];
            let w = p + 1;
            let mut v = vec![0.0; w];
            let mut d1 = vec![0.0; w];
            let mut d2 = vec![0.0; w];
            self.basis.eval(y[k], p, &mut v, &mut d1, &mut d2);
            let dk: f64 = red.a.iter().zip(&d1).map(|(a, d)| a * d).sum();
            acc += self.components[k].rectifier.log_g(dk);
        }
        acc
    }
    fn grad_log_det_into(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        let mut h = vec![0.0; d];
        for k in 0..d {
            let diag = self.diag_gradient(k, y, &mut h);
            for j in 0..=k {
                out[j] += h[j] / diag;
            }
        }
    }
}
