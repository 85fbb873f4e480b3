//! One-dimensional Hermite-type bases, total-order multi-index sets, and the
//! Gauss–Legendre rule on [0, 1] used by the rectified-integral components.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

/// Univariate basis family for triangular map components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// 1, t, then normalized He_n(t)·e^{−t²/4} for n ≥ 2. The decaying higher
    /// terms keep ∂_k f asymptotically linear, so every component stays onto.
    #[default]
    HermiteFunction,
    /// Normalized probabilist Hermite polynomials He_n(t)/√(n!).
    ProbabilistHermite,
}

impl BasisKind {
    /// Values and first two derivatives of basis functions 0..=order at t.
    pub fn eval(&self, t: f64, order: usize, v: &mut [f64], d1: &mut [f64], d2: &mut [f64]) {
        // normalized He_n: ψ_{n+1} = (t ψ_n − √n ψ_{n−1}) / √(n+1), ψ_n' = √n ψ_{n−1}
        v[0] = 1.0;
        if order >= 1 {
            v[1] = t;
        }
        for n in 1..order {
            let nf = n as f64;
            v[n + 1] = (t * v[n] - nf.sqrt() * v[n - 1]) / (nf + 1.0).sqrt();
        }
        d1[0] = 0.0;
        d2[0] = 0.0;
        for n in 1..=order {
            let nf = n as f64;
            d1[n] = nf.sqrt() * v[n - 1];
            d2[n] = if n >= 2 {
                (nf * (nf - 1.0)).sqrt() * v[n - 2]
            } else {
                0.0
            };
        }
        if *self == BasisKind::HermiteFunction && order >= 2 {
            let e = (-0.25 * t * t).exp();
            for n in 2..=order {
                let (p, p1, p2) = (v[n], d1[n], d2[n]);
                v[n] = p * e;
                d1[n] = (p1 - 0.5 * t * p) * e;
                d2[n] = (p2 - t * p1 + (0.25 * t * t - 0.5) * p) * e;
            }
        }
    }

    pub fn values(&self, t: f64, order: usize) -> Vec<f64> {
        let mut v = vec![0.0; order + 1];
        let mut d1 = vec![0.0; order + 1];
        let mut d2 = vec![0.0; order + 1];
        self.eval(t, order, &mut v, &mut d1, &mut d2);
        v
    }
}

/// All multi-indices in `nvars` variables with total degree ≤ `order`,
/// sorted by degree, then lexicographically descending in the first variable.
pub fn total_order_multi_indices(nvars: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() - 1 {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in (0..=left).rev() {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, out);
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        return vec![vec![]];
    }
    let mut cur = vec![0; nvars];
    for deg in 0..=order {
        rec(0, deg, &mut cur, &mut out);
    }
    out
}

/// Gauss–Legendre nodes and weights rescaled to [0, 1] (weights sum to 1).
pub fn unit_interval_rule(points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(points.max(1)).expect("nonzero");
    let rule = GaussLegendre::new(n);
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nodes = pairs.iter().map(|(x, _)| 0.5 * (x + 1.0)).collect();
    let weights = pairs.iter().map(|(_, w)| 0.5 * w).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(kind: BasisKind) {
        let order = 5;
        let mut v = vec![0.0; 6];
        let mut d1 = vec![0.0; 6];
        let mut d2 = vec![0.0; 6];
        let mut vp = v.clone();
        let mut vm = v.clone();
        let mut d1p = v.clone();
        let mut d1m = v.clone();
        let mut scratch = v.clone();
        for &t in &[-2.3, -0.4, 0.0, 0.7, 3.1] {
            let h = 1e-6;
            kind.eval(t, order, &mut v, &mut d1, &mut d2);
            kind.eval(t + h, order, &mut vp, &mut d1p, &mut scratch);
            kind.eval(t - h, order, &mut vm, &mut d1m, &mut scratch);
            for n in 0..=order {
                assert!(((vp[n] - vm[n]) / (2.0 * h) - d1[n]).abs() < 1e-7, "{kind:?} d1 n={n}");
                assert!(((d1p[n] - d1m[n]) / (2.0 * h) - d2[n]).abs() < 1e-7, "{kind:?} d2 n={n}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(BasisKind::HermiteFunction);
        fd_check(BasisKind::ProbabilistHermite);
    }

    #[test]
    fn hermite_values() {
        let v = BasisKind::ProbabilistHermite.values(2.0, 3);
        // He_2 = t² − 1, He_3 = t³ − 3t
        assert!((v[2] - 3.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((v[3] - 2.0 / 6f64.sqrt()).abs() < 1e-14);
        let w = BasisKind::HermiteFunction.values(2.0, 3);
        assert_eq!(w[1], 2.0);
        assert!((w[3] - v[3] * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(total_order_multi_indices(1, 3).len(), 4);
        assert_eq!(total_order_multi_indices(2, 3).len(), 10);
        assert_eq!(total_order_multi_indices(3, 2).len(), 10);
        let idx = total_order_multi_indices(2, 1);
        assert_eq!(idx, vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn quadrature_integrates_polynomials() {
        let (x, w) = unit_interval_rule(8);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(15)).sum();
        assert!((i - 1.0 / 16.0).abs() < 1e-14);
    }
}
