use super::{Transport, TransportMap};
use crate::error::{Error, Result};
use crate::linalg;

/// S = outer ∘ inner.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedMap {
    pub outer: TransportMap,
    pub inner: TransportMap,
}

impl ComposedMap {
    pub fn new(outer: TransportMap, inner: TransportMap) -> Result<Self> {
        if outer.dim() != inner.dim() {
            return Err(Error::DimensionMismatch {
                expected: outer.dim(),
                got: inner.dim(),
            });
        }
        Ok(ComposedMap { outer, inner })
    }
}

impl Transport for ComposedMap {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn is_lower_triangular(&self) -> bool {
        self.outer.is_lower_triangular() && self.inner.is_lower_triangular()
    }
    fn is_affine(&self) -> bool {
        self.outer.is_affine() && self.inner.is_affine()
    }
    fn forward_into(&self, y: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; self.dim()];
        self.inner.forward_into(y, &mut z);
        self.outer.forward_into(&z, out);
    }
    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let mut z = vec![0.0; self.dim()];
        self.outer.inverse_into(x, &mut z)?;
        self.inner.inverse_into(&z, out)
    }
    fn jacobian_into(&self, y: &[f64], jac: &mut [f64]) {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut ji = vec![0.0; d * d];
        let mut jo = vec![0.0; d * d];
        self.inner.forward_into(y, &mut z);
        self.inner.jacobian_into(y, &mut ji);
        self.outer.jacobian_into(&z, &mut jo);
        for i in 0..d {
            for j in 0..d {
                jac[i * d + j] = (0..d).map(|m| jo[i * d + m] * ji[m * d + j]).sum();
            }
        }
    }
    fn log_det_jacobian(&self, y: &[f64]) -> f64 {
        let mut z = vec![0.0; self.dim()];
        self.inner.forward_into(y, &mut z);
        self.outer.log_det_jacobian(&z) + self.inner.log_det_jacobian(y)
    }
    fn component_hessian_into(&self, k: usize, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut ji = vec![0.0; d * d];
        let mut jo = vec![0.0; d * d];
        let mut h = vec![0.0; d * d];
        self.inner.forward_into(y, &mut z);
        self.inner.jacobian_into(y, &mut ji);
        self.outer.jacobian_into(&z, &mut jo);
        // J_Iᵀ ∇²O_k J_I
        self.outer.component_hessian_into(k, &z, &mut h);
        let ji_m = linalg::to_dmatrix(&ji, d);
        let core = ji_m.transpose() * linalg::to_dmatrix(&h, d) * &ji_m;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = core[(i, j)];
            }
        }
        // + Σ_m (J_O)_{km} ∇²I_m
        if !self.inner.is_affine() {
            for m in 0..d {
                let w = jo[k * d + m];
                if w != 0.0 {
                    self.inner.component_hessian_into(m, y, &mut h);
                    for (o, v) in out.iter_mut().zip(&h) {
                        *o += w * v;
                    }
                }
            }
        }
    }
    fn grad_log_det_into(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let mut ji = vec![0.0; d * d];
        let mut go = vec![0.0; d];
        self.inner.forward_into(y, &mut z);
        self.inner.jacobian_into(y, &mut ji);
        self.outer.grad_log_det_into(&z, &mut go);
        self.inner.grad_log_det_into(y, out);
        for j in 0..d {
            for m in 0..d {
                out[j] += ji[m * d + j] * go[m];
            }
        }
    }
}
