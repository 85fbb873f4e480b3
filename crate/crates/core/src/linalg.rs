//! Small dense helpers on row-major slices. Used in the per-step hot paths
//! where nalgebra temporaries would allocate.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// out = A x for a row-major `n × n` matrix.
pub fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        out[i] = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// out = Aᵀ x for a row-major `n × n` matrix.
pub fn mat_t_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    out[..n].iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        let xi = x[i];
        for j in 0..n {
            out[j] += a[i * n + j] * xi;
        }
    }
}

/// Solves L z = b in place for lower-triangular L.
pub fn solve_lower_in_place(l: &[f64], b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= l[i * n + j] * b[j];
        }
        b[i] = acc / l[i * n + i];
    }
}

/// Solves Lᵀ z = b in place for lower-triangular L.
pub fn solve_lower_transpose_in_place(l: &[f64], b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= l[j * n + i] * b[j];
        }
        b[i] = acc / l[i * n + i];
    }
}

/// Inverse of a lower-triangular matrix, written into `out` (also lower triangular).
pub fn invert_lower(l: &[f64], n: usize, out: &mut [f64]) {
    out[..n * n].iter_mut().for_each(|v| *v = 0.0);
    for col in 0..n {
        out[col * n + col] = 1.0 / l[col * n + col];
        for i in col + 1..n {
            let mut acc = 0.0;
            for j in col..i {
                acc -= l[i * n + j] * out[j * n + col];
            }
            out[i * n + col] = acc / l[i * n + i];
        }
    }
}

/// Dense inverse by Gauss–Jordan elimination with partial pivoting.
/// `scratch` must hold at least `n * n` values.
pub fn invert_general(a: &[f64], n: usize, out: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    let m = &mut scratch[..n * n];
    m.copy_from_slice(&a[..n * n]);
    out[..n * n].iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return Err(Error::Step("singular Jacobian".into()));
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
                out.swap(col * n + j, piv * n + j);
            }
        }
        let inv = 1.0 / m[col * n + col];
        for j in 0..n {
            m[col * n + j] *= inv;
            out[col * n + j] *= inv;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        out[r * n + j] -= f * out[col * n + j];
                    }
                }
            }
        }
    }
    Ok(())
}

/// Solves A z = b with a fresh dense factorization; allocates.
pub fn solve_general(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut scratch = vec![0.0; n * n];
    invert_general(a, n, &mut inv, &mut scratch)?;
    let mut out = vec![0.0; n];
    mat_vec(&inv, b, &mut out);
    Ok(out)
}

pub fn is_lower_triangular(a: &[f64], n: usize) -> bool {
    (0..n).all(|i| (i + 1..n).all(|j| a[i * n + j] == 0.0))
}

pub fn to_dmatrix(a: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &a[..n * n])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidParameter("matrix must be square".into()));
    }
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::InvalidParameter("matrix is not symmetric".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let tol = 1e-10 * scale;
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::InvalidParameter("matrix is not positive semidefinite".into()));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
