use nalgebra::DMatrix;

use super::Transport;
use crate::error::{Error, Result};
use crate::linalg;

/// S(y) = A y + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    dim: usize,
    matrix: Vec<f64>,
    inverse: Vec<f64>,
    offset: Vec<f64>,
    log_det: f64,
    lower: bool,
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, offset: &[f64]) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d || offset.len() != d {
            return Err(Error::InvalidParameter(
                "affine map needs a square matrix and matching offset".into(),
            ));
        }
        let a = linalg::from_dmatrix(&matrix);
        if a.iter().chain(offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("affine map entries must be finite".into()));
        }
        let det = matrix.clone().lu().determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::InvalidParameter("affine matrix is singular".into()));
        }
        let mut inverse = vec![0.0; d * d];
        let mut scratch = vec![0.0; d * d];
        linalg::invert_general(&a, d, &mut inverse, &mut scratch)
            .map_err(|_| Error::InvalidParameter("affine matrix is singular".into()))?;
        let lower = linalg::is_lower_triangular(&a, d) && (0..d).all(|i| a[i * d + i] > 0.0);
        Ok(AffineMap {
            dim: d,
            matrix: a,
            inverse,
            offset: offset.to_vec(),
            log_det: det.abs().ln(),
            lower,
        })
    }

    pub fn diagonal(scales: &[f64], offset: &[f64]) -> Result<Self> {
        let d = scales.len();
        Self::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(scales)),
            &offset[..d.min(offset.len())],
        )
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), &vec![0.0; dim]).expect("identity is invertible")
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        linalg::to_dmatrix(&self.matrix, self.dim)
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Per-coordinate standardization S(y) = (y − mean) / sd.
    pub fn standardizing(mean: &[f64], sd: &[f64]) -> Result<Self> {
        if sd.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(
                "standardization needs positive standard deviations".into(),
            ));
        }
        let scales: Vec<f64> = sd.iter().map(|s| 1.0 / s).collect();
        let offset: Vec<f64> = mean.iter().zip(sd).map(|(m, s)| -m / s).collect();
        Self::diagonal(&scales, &offset)
    }
}

impl Transport for AffineMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn is_lower_triangular(&self) -> bool {
        self.lower
    }
    fn is_affine(&self) -> bool {
        true
    }
    fn forward_into(&self, y: &[f64], out: &mut [f64]) {
        linalg::mat_vec(&self.matrix, y, out);
        for (o, b) in out.iter_mut().zip(&self.offset) {
            *o += b;
        }
    }
    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.inverse[i * d + j] * (x[j] - self.offset[j]);
            }
            out[i] = acc;
        }
        Ok(())
    }
    fn jacobian_into(&self, _y: &[f64], jac: &mut [f64]) {
        jac[..self.dim * self.dim].copy_from_slice(&self.matrix);
    }
    fn log_det_jacobian(&self, _y: &[f64]) -> f64 {
        self.log_det
    }
    fn component_hessian_into(&self, _k: usize, _y: &[f64], out: &mut [f64]) {
        out[..self.dim * self.dim].iter_mut().for_each(|v| *v = 0.0);
    }
    fn grad_log_det_into(&self, _y: &[f64], out: &mut [f64]) {
        out[..self.dim].iter_mut().for_each(|v| *v = 0.0);
    }
}

/// S(y) = (y₁/s, y₂ + b·y₁² − 100b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BananaMap {
    pub s: f64,
    pub b: f64,
}

impl BananaMap {
    pub fn new(s: f64, b: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "banana map requires s > 0 and finite b (got s={s}, b={b})"
            )));
        }
        Ok(BananaMap { s, b })
    }
}

impl Transport for BananaMap {
    fn dim(&self) -> usize {
        2
    }
    fn is_lower_triangular(&self) -> bool {
        true
    }
    fn forward_into(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0] / self.s;
        out[1] = y[1] + self.b * y[0] * y[0] - 100.0 * self.b;
    }
    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let y1 = self.s * x[0];
        out[0] = y1;
        out[1] = x[1] - self.b * y1 * y1 + 100.0 * self.b;
        Ok(())
    }
    fn jacobian_into(&self, y: &[f64], jac: &mut [f64]) {
        jac[0] = 1.0 / self.s;
        jac[1] = 0.0;
        jac[2] = 2.0 * self.b * y[0];
        jac[3] = 1.0;
    }
    fn log_det_jacobian(&self, _y: &[f64]) -> f64 {
        -self.s.ln()
    }
    fn component_hessian_into(&self, k: usize, _y: &[f64], out: &mut [f64]) {
        out[..4].iter_mut().for_each(|v| *v = 0.0);
        if k == 1 {
            out[0] = 2.0 * self.b;
        }
    }
    fn grad_log_det_into(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 0.0;
    }
}

/// Exact normalizing map of the hybrid Rosenbrock target:
/// S₁ = √(2a)(y₁ − μ), S_{j,i} = √(2b_{ji})(y_{j,i} − y_{j,i−1}²).
#[derive(Debug, Clone, PartialEq)]
pub struct RosenbrockMap {
    pub n1: usize,
    pub n2: usize,
    pub mu: f64,
    pub a: f64,
    pub b: Vec<Vec<f64>>,
    dim: usize,
    /// √(2a) then √(2b) in flattened coordinate order
    scale: Vec<f64>,
    /// predecessor index of each coordinate > 0
    prev: Vec<usize>,
    log_det: f64,
}

impl RosenbrockMap {
    pub fn new(n1: usize, n2: usize, mu: f64, a: f64, b: Vec<Vec<f64>>) -> Result<Self> {
        if n1 < 2 || n2 < 1 || !(a > 0.0) {
            return Err(Error::InvalidParameter(
                "Rosenbrock map needs n1 >= 2, n2 >= 1, a > 0".into(),
            ));
        }
        if b.len() != n2 || b.iter().any(|r| r.len() != n1 - 1 || r.iter().any(|v| !(*v > 0.0))) {
            return Err(Error::InvalidParameter(format!(
                "Rosenbrock b must be a positive {n2} x {} table",
                n1 - 1
            )));
        }
        let dim = (n1 - 1) * n2 + 1;
        let mut scale = vec![(2.0 * a).sqrt()];
        let mut prev = vec![0];
        for row in &b {
            for (idx, bji) in row.iter().enumerate() {
                scale.push((2.0 * bji).sqrt());
                let cur = scale.len() - 1;
                prev.push(if idx == 0 { 0 } else { cur - 1 });
            }
        }
        let log_det = scale.iter().map(|s| s.ln()).sum();
        Ok(RosenbrockMap {
            n1,
            n2,
            mu,
            a,
            b,
            dim,
            scale,
            prev,
            log_det,
        })
    }
}

impl Transport for RosenbrockMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn is_lower_triangular(&self) -> bool {
        true
    }
    fn forward_into(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.scale[0] * (y[0] - self.mu);
        for i in 1..self.dim {
            let p = y[self.prev[i]];
            out[i] = self.scale[i] * (y[i] - p * p);
        }
    }
    fn inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = x[0] / self.scale[0] + self.mu;
        for i in 1..self.dim {
            let p = out[self.prev[i]];
            out[i] = x[i] / self.scale[i] + p * p;
        }
        Ok(())
    }
    fn jacobian_into(&self, y: &[f64], jac: &mut [f64]) {
        let d = self.dim;
        jac[..d * d].iter_mut().for_each(|v| *v = 0.0);
        jac[0] = self.scale[0];
        for i in 1..d {
            let p = self.prev[i];
            jac[i * d + i] = self.scale[i];
            jac[i * d + p] = -2.0 * self.scale[i] * y[p];
        }
    }
    fn log_det_jacobian(&self, _y: &[f64]) -> f64 {
        self.log_det
    }
    fn component_hessian_into(&self, k: usize, _y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
        if k > 0 {
            let p = self.prev[k];
            out[p * d + p] = -2.0 * self.scale[k];
        }
    }
    fn grad_log_det_into(&self, _y: &[f64], out: &mut [f64]) {
        out[..self.dim].iter_mut().for_each(|v| *v = 0.0);
    }
}
