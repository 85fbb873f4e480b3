//! Maximum-likelihood training of monotone triangular maps from samples.
//!
//! For a lower-triangular S pushing samples towards N(0, I) the negative
//! log-likelihood separates into one objective per component,
//! J_k(c) = (1/N) Σᵢ [½ S_k(Zⁱ)² − log ∂_kS_k(Zⁱ)],
//! which is minimized independently (and in parallel) for each k.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{total_order_multi_indices, unit_interval_rule, BasisKind};
use crate::error::{Error, Result};
use crate::optim::{minimize, LbfgsOptions};
use crate::transport::{compose, AffineMap, MonotoneComponent, Rectifier, Transport, TransportMap, TriangularMap};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapTrainingSpec {
    pub total_order: usize,
    pub basis: BasisKind,
    pub rectifier: Rectifier,
    pub quadrature_points: usize,
    pub optimizer: LbfgsOptions,
    pub standardize: bool,
}

impl Default for MapTrainingSpec {
    fn default() -> Self {
        MapTrainingSpec {
            total_order: 2,
            basis: BasisKind::HermiteFunction,
            rectifier: Rectifier::Softplus,
            quadrature_points: 32,
            optimizer: LbfgsOptions::default(),
            standardize: true,
        }
    }
}

impl MapTrainingSpec {
    pub fn with_order(total_order: usize) -> Self {
        MapTrainingSpec {
            total_order,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quadrature_points < 8 {
            return Err(Error::InvalidParameter(format!(
                "quadrature_points must be at least 8 (got {})",
                self.quadrature_points
            )));
        }
        if self.total_order > 6 {
            return Err(Error::InvalidParameter(format!(
                "total_order must be at most 6 (got {})",
                self.total_order
            )));
        }
        if !(self.optimizer.grad_tol > 0.0) || self.optimizer.memory == 0 {
            return Err(Error::InvalidParameter("invalid optimizer settings".into()));
        }
        Ok(())
    }

    /// Coefficient count of the largest component for dimension `d`.
    pub fn coefficients_per_component(&self, d: usize) -> usize {
        total_order_multi_indices(d, self.total_order).len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub index: usize,
    pub coefficients: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub samples: usize,
    pub dim: usize,
    pub spec: MapTrainingSpec,
    pub components: Vec<ComponentReport>,
    /// Mean NLL of the trained map on the training samples.
    pub final_nll: f64,
}

/// (1/N) Σᵢ [½‖S(Zⁱ)‖² − log det J_S(Zⁱ)] + (d/2) log 2π.
pub fn negative_log_likelihood(map: &dyn Transport, samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let d = map.dim();
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for (i, z) in samples.iter().enumerate() {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: z.len(),
            });
        }
        map.forward_into(z, &mut x);
        let term = 0.5 * x.iter().map(|v| v * v).sum::<f64>() - map.log_det_jacobian(z);
        if !term.is_finite() {
            return Err(Error::TrainingNumerics { sample: i });
        }
        acc += term;
    }
    Ok(acc / samples.len() as f64 + 0.5 * d as f64 * LOG_2PI)
}

/// Value and ∂/∂y_k of a single component at (prefix, y_k).
pub fn monotone_component_eval(map: &TriangularMap, k: usize, y_prefix: &[f64], y_k: f64) -> (f64, f64) {
    map.component_eval(k, y_prefix, y_k)
}

/// Precomputed basis evaluations for the component-k objective.
pub struct ComponentObjective {
    k: usize,
    n: usize,
    order: usize,
    rectifier: Rectifier,
    multi_indices: Vec<Vec<usize>>,
    weights: Vec<f64>,
    /// prefix products Π_{j<k} φ_{α_j}(Z_ij), n × m
    prefix: Vec<f64>,
    /// φ_n(0)
    phi0: Vec<f64>,
    zk: Vec<f64>,
    /// φ'_n(t_q Z_ik), n × Q × (p+1)
    dq: Vec<f64>,
    /// φ'_n(Z_ik), n × (p+1)
    dz: Vec<f64>,
}

impl ComponentObjective {
    pub fn new(k: usize, samples: &[Vec<f64>], spec: &MapTrainingSpec) -> Result<Self> {
        let multi_indices = total_order_multi_indices(k + 1, spec.total_order);
        let p = spec.total_order;
        let w = p + 1;
        let m = multi_indices.len();
        let (nodes, weights) = unit_interval_rule(spec.quadrature_points);
        let q = nodes.len();
        let n = samples.len();
        let mut prefix = vec![0.0; n * m];
        let mut dq = vec![0.0; n * q * w];
        let mut dz = vec![0.0; n * w];
        let mut zk = vec![0.0; n];
        let mut v = vec![0.0; w];
        let mut d1 = vec![0.0; w];
        let mut d2 = vec![0.0; w];
        let mut table = vec![0.0; k.max(1) * w];
        for (i, z) in samples.iter().enumerate() {
            if z.len() <= k {
                return Err(Error::DimensionMismatch {
                    expected: k + 1,
                    got: z.len(),
                });
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingNumerics { sample: i });
            }
            for j in 0..k {
                spec.basis.eval(z[j], p, &mut v, &mut d1, &mut d2);
                table[j * w..(j + 1) * w].copy_from_slice(&v);
            }
            for (a, alpha) in multi_indices.iter().enumerate() {
                prefix[i * m + a] = (0..k).map(|j| table[j * w + alpha[j]]).product();
            }
            zk[i] = z[k];
            for (qi, t) in nodes.iter().enumerate() {
                spec.basis.eval(t * z[k], p, &mut v, &mut d1, &mut d2);
                dq[(i * q + qi) * w..(i * q + qi + 1) * w].copy_from_slice(&d1);
            }
            spec.basis.eval(z[k], p, &mut v, &mut d1, &mut d2);
            dz[i * w..(i + 1) * w].copy_from_slice(&d1);
        }
        spec.basis.eval(0.0, p, &mut v, &mut d1, &mut d2);
        Ok(ComponentObjective {
            k,
            n,
            order: p,
            rectifier: spec.rectifier,
            multi_indices,
            weights,
            prefix,
            phi0: v,
            zk,
            dq,
            dz,
        })
    }

    pub fn num_coefficients(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn multi_indices(&self) -> &[Vec<usize>] {
        &self.multi_indices
    }

    /// Initial guess S_k(y) = y_k.
    pub fn initial_coefficients(&self) -> Vec<f64> {
        self.multi_indices
            .iter()
            .map(|a| {
                let linear = a[self.k] == 1 && a.iter().sum::<usize>() == 1;
                if linear {
                    self.rectifier.unit_preimage()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Objective value; writes the gradient. Returns NaN and records the
    /// offending sample index when any term is non-finite.
    pub fn evaluate(&self, c: &[f64], grad: &mut [f64]) -> (f64, Option<usize>) {
        let m = self.multi_indices.len();
        let w = self.order + 1;
        let q = self.weights.len();
        let g = self.rectifier;
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut a = vec![0.0; w];
        let mut da = vec![0.0; w];
        let mut total = 0.0;
        for i in 0..self.n {
            a.iter_mut().for_each(|v| *v = 0.0);
            let pre = &self.prefix[i * m..(i + 1) * m];
            for (idx, alpha) in self.multi_indices.iter().enumerate() {
                a[alpha[self.k]] += c[idx] * pre[idx];
            }
            let z = self.zk[i];
            let mut s: f64 = a.iter().zip(&self.phi0).map(|(a, p)| a * p).sum();
            // ∂S/∂a_n accumulates φ_n(0) + z Σ_q w_q g'(u_q) φ'_n(t_q z)
            da.copy_from_slice(&self.phi0);
            let mut integral = 0.0;
            for qi in 0..q {
                let row = &self.dq[(i * q + qi) * w..(i * q + qi + 1) * w];
                let u: f64 = a.iter().zip(row).map(|(a, r)| a * r).sum();
                integral += self.weights[qi] * g.g(u);
                let gp = z * self.weights[qi] * g.dg(u);
                for n in 0..w {
                    da[n] += gp * row[n];
                }
            }
            s += z * integral;
            let dzrow = &self.dz[i * w..(i + 1) * w];
            let u: f64 = a.iter().zip(dzrow).map(|(a, r)| a * r).sum();
            let term = 0.5 * s * s - g.log_g(u);
            if !term.is_finite() {
                return (f64::NAN, Some(i));
            }
            total += term;
            let ratio = g.dg(u) / g.g(u);
            for n in 0..w {
                da[n] = s * da[n] - ratio * dzrow[n];
            }
            for (idx, alpha) in self.multi_indices.iter().enumerate() {
                grad[idx] += da[alpha[self.k]] * pre[idx];
            }
        }
        let inv = 1.0 / self.n as f64;
        grad.iter_mut().for_each(|v| *v *= inv);
        (total * inv, None)
    }
}

/// Trains component k on (already standardized, if requested) samples.
pub fn train_component(
    k: usize,
    samples: &[Vec<f64>],
    spec: &MapTrainingSpec,
) -> Result<(MonotoneComponent, ComponentReport)> {
    spec.validate()?;
    let obj = ComponentObjective::new(k, samples, spec)?;
    let x0 = obj.initial_coefficients();
    let mut bad_sample = None;
    let result = minimize(
        |c, g| {
            let (v, bad) = obj.evaluate(c, g);
            if bad.is_some() && bad_sample.is_none() {
                bad_sample = bad;
            }
            v
        },
        &x0,
        &spec.optimizer,
    )
    .map_err(|_| Error::TrainingNumerics {
        sample: bad_sample.unwrap_or(0),
    })?;
    let report = ComponentReport {
        index: k,
        coefficients: obj.num_coefficients(),
        objective: result.value,
        grad_norm: result.grad_norm,
        iterations: result.iterations,
        converged: result.converged,
    };
    let component = MonotoneComponent {
        index: k,
        multi_indices: obj.multi_indices().to_vec(),
        coefficients: result.x,
        rectifier: spec.rectifier,
    };
    Ok((component, report))
}

/// Per-coordinate sample mean and standard deviation (population form).
pub fn sample_moments(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for z in samples {
        for j in 0..d {
            mean[j] += z[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for z in samples {
        for j in 0..d {
            var[j] += (z[j] - mean[j]).powi(2);
        }
    }
    let sd = var.iter().map(|v| (v / n).sqrt()).collect();
    (mean, sd)
}

/// Trains a full triangular map; composed with the standardizing pre-map when
/// `spec.standardize` is set.
pub fn train_map_with_report(
    samples: &[Vec<f64>],
    spec: &MapTrainingSpec,
) -> Result<(TransportMap, TrainingReport)> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no training samples".into()));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|z| z.len() != d) {
        return Err(Error::InvalidParameter("samples must share a positive dimension".into()));
    }
    let needed = 10 * spec.coefficients_per_component(d);
    if samples.len() < needed {
        return Err(Error::InvalidParameter(format!(
            "need at least {needed} samples for order {} in dimension {d} (got {})",
            spec.total_order,
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|z| z.iter().any(|v| !v.is_finite())) {
        return Err(Error::TrainingNumerics { sample: i });
    }
    let pre = if spec.standardize {
        let (mean, sd) = sample_moments(samples);
        Some(AffineMap::standardizing(&mean, &sd)?)
    } else {
        None
    };
    let work: Vec<Vec<f64>> = match &pre {
        Some(p) => samples.iter().map(|z| p.forward(z)).collect(),
        None => samples.to_vec(),
    };
    let trained: Vec<Result<(MonotoneComponent, ComponentReport)>> = (0..d)
        .into_par_iter()
        .map(|k| train_component(k, &work, spec))
        .collect();
    let mut components = Vec::with_capacity(d);
    let mut reports = Vec::with_capacity(d);
    for t in trained {
        let (c, r) = t?;
        components.push(c);
        reports.push(r);
    }
    let tri = TransportMap::Triangular(TriangularMap::new(spec.basis, spec.quadrature_points, components)?);
    let map = match pre {
        Some(p) => compose(tri, TransportMap::Affine(p))?,
        None => tri,
    };
    let final_nll = negative_log_likelihood(&map, samples)?;
    Ok((
        map,
        TrainingReport {
            samples: samples.len(),
            dim: d,
            spec: spec.clone(),
            components: reports,
            final_nll,
        },
    ))
}

pub fn train_map(samples: &[Vec<f64>], spec: &MapTrainingSpec) -> Result<TransportMap> {
    train_map_with_report(samples, spec).map(|(m, _)| m)
}

/// Held-out score of one candidate total order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub order: usize,
    /// Mean negative log-likelihood on the held-out samples; `None` when the
    /// fit or its evaluation failed.
    pub validation_nll: Option<f64>,
}

/// Chooses the total order in `1..=max_order` by held-out likelihood: each
/// order is fit on the leading `1 − holdout` share of `samples` and scored on
/// the rest. The winner is refit on all samples. Orders with more
/// coefficients than the fitting share supports are not tried, so larger
/// sample sets can afford richer maps.
pub fn train_map_adaptive(
    samples: &[Vec<f64>],
    spec: &MapTrainingSpec,
    max_order: usize,
    holdout: f64,
) -> Result<(TransportMap, TrainingReport, Vec<OrderScore>)> {
    if max_order == 0 || !(holdout > 0.0 && holdout < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need max_order ≥ 1 and 0 < holdout < 1 (got {max_order}, {holdout})"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no training samples".into()));
    }
    let d = samples[0].len();
    let cut = ((1.0 - holdout) * samples.len() as f64).floor() as usize;
    let (fit, held) = samples.split_at(cut);
    if held.is_empty() {
        return Err(Error::InvalidParameter("holdout share is empty".into()));
    }
    let mut scores = Vec::new();
    for order in 1..=max_order {
        let candidate = MapTrainingSpec {
            total_order: order,
            ..spec.clone()
        };
        if fit.len() < 10 * candidate.coefficients_per_component(d) {
            break;
        }
        let validation_nll = train_map(fit, &candidate)
            .and_then(|m| negative_log_likelihood(&m, held))
            .ok()
            .filter(|v| v.is_finite());
        scores.push(OrderScore { order, validation_nll });
    }
    let best = scores
        .iter()
        .filter_map(|s| s.validation_nll.map(|v| (v, s.order)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, o)| o)
        .ok_or_else(|| Error::InvalidParameter(format!("no order in 1..={max_order} could be fit to {} samples", fit.len())))?;
    let chosen = MapTrainingSpec {
        total_order: best,
        ..spec.clone()
    };
    let (map, report) = train_map_with_report(samples, &chosen)?;
    Ok((map, report, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::NoiseStream;
    use crate::targets::{self, LogDensity};
    use crate::transport::map_to_json;

    fn normal_samples(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut noise = NoiseStream::new(seed, 0);
        (0..n)
            .map(|_| {
                let mut z = vec![0.0; d];
                noise.fill(&mut z);
                z
            })
            .collect()
    }

    fn banana_samples(n: usize, seed: u64) -> Vec<Vec<f64>> {
        bent_banana_samples(n, seed, 0.01)
    }

    fn bent_banana_samples(n: usize, seed: u64, b: f64) -> Vec<Vec<f64>> {
        let t = targets::banana(4.0, b).unwrap();
        let map = t.exact_map.unwrap();
        // the banana pushes to N(0, I/2)
        normal_samples(n, 2, seed)
            .into_iter()
            .map(|x| map.inverse(&[x[0] / 2f64.sqrt(), x[1] / 2f64.sqrt()]).unwrap())
            .collect()
    }

    #[test]
    fn spec_guards() {
        let mut s = MapTrainingSpec::default();
        s.quadrature_points = 4;
        assert!(s.validate().is_err());
        let s = MapTrainingSpec::with_order(7);
        assert!(s.validate().is_err());
        assert!(MapTrainingSpec::with_order(6).validate().is_ok());
        let few = normal_samples(20, 2, 1);
        assert!(train_map(&few, &MapTrainingSpec::with_order(3)).is_err());
    }

    #[test]
    fn identity_nll_is_gaussian_entropy() {
        let z = normal_samples(10_000, 2, 3);
        let id = TransportMap::identity(2);
        let nll = negative_log_likelihood(&id, &z).unwrap();
        let expected = 1.0 + LOG_2PI;
        // per-sample term ½‖z‖² has variance d/2
        let se = (1.0f64 / 10_000.0).sqrt();
        assert!((nll - expected).abs() < 3.0 * se, "{nll} vs {expected}");
    }

    #[test]
    fn whitening_and_exact_maps_beat_identity() {
        let cov = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.2, 1.2, 1.0]);
        let g = targets::gaussian(&[0.0, 0.0], &cov).unwrap();
        let chol = cov.clone().cholesky().unwrap().l();
        let z: Vec<Vec<f64>> = normal_samples(5000, 2, 4)
            .into_iter()
            .map(|e| (0..2).map(|i| (0..2).map(|j| chol[(i, j)] * e[j]).sum()).collect())
            .collect();
        let id = TransportMap::identity(2);
        let whiten = g.exact_map.unwrap();
        assert!(negative_log_likelihood(&whiten, &z).unwrap() < negative_log_likelihood(&id, &z).unwrap());

        let b = banana_samples(5000, 5);
        let exact = targets::banana(4.0, 0.01).unwrap().exact_map.unwrap();
        assert!(negative_log_likelihood(&exact, &b).unwrap() <= negative_log_likelihood(&id, &b).unwrap());
    }

    #[test]
    fn separability() {
        let b = banana_samples(2000, 6);
        let spec = MapTrainingSpec {
            standardize: false,
            ..MapTrainingSpec::with_order(2)
        };
        let map = train_map(&b, &spec).unwrap();
        let TransportMap::Triangular(tri) = &map else {
            panic!("expected a triangular map")
        };
        let mut total = 0.0;
        for k in 0..2 {
            let obj = ComponentObjective::new(k, &b, &spec).unwrap();
            let mut g = vec![0.0; obj.num_coefficients()];
            total += obj.evaluate(&tri.components[k].coefficients, &mut g).0;
        }
        let nll = negative_log_likelihood(&map, &b).unwrap();
        assert!((nll - (total + LOG_2PI)).abs() < 1e-10);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let b = banana_samples(500, 7);
        for basis in [BasisKind::HermiteFunction, BasisKind::ProbabilistHermite] {
            for rectifier in [Rectifier::Softplus, Rectifier::ShiftedElu] {
                let spec = MapTrainingSpec {
                    basis,
                    rectifier,
                    ..MapTrainingSpec::with_order(3)
                };
                let obj = ComponentObjective::new(1, &b, &spec).unwrap();
                let m = obj.num_coefficients();
                let mut noise = NoiseStream::new(8, 0);
                let mut c = vec![0.0; m];
                noise.fill(&mut c);
                c.iter_mut().for_each(|v| *v *= 0.1);
                let mut g = vec![0.0; m];
                obj.evaluate(&c, &mut g);
                let mut scratch = vec![0.0; m];
                for i in 0..m {
                    let h = 1e-6;
                    let mut p = c.clone();
                    let mut q = c.clone();
                    p[i] += h;
                    q[i] -= h;
                    let fd = (obj.evaluate(&p, &mut scratch).0 - obj.evaluate(&q, &mut scratch).0) / (2.0 * h);
                    assert!((g[i] - fd).abs() <= 1e-5 * g[i].abs().max(1e-3), "{basis:?} {rectifier:?} {i}: {} vs {fd}", g[i]);
                }
            }
        }
    }

    #[test]
    fn learns_identity_on_standard_normal() {
        let z: Vec<Vec<f64>> = normal_samples(10_000, 1, 9);
        let spec = MapTrainingSpec {
            standardize: false,
            basis: BasisKind::ProbabilistHermite,
            ..MapTrainingSpec::with_order(1)
        };
        let (c, report) = train_component(0, &z, &spec).unwrap();
        assert!(report.converged);
        // S = c₀ + softplus(c₁) y
        let slope = Rectifier::Softplus.g(c.coefficients[1]);
        assert!((slope - 1.0).abs() < 0.05 && c.coefficients[0].abs() < 0.05, "{c:?}");
    }

    #[test]
    fn learns_affine_map_for_shifted_gaussian() {
        let z: Vec<Vec<f64>> = normal_samples(10_000, 1, 10).into_iter().map(|v| vec![3.0 + 2.0 * v[0]]).collect();
        let spec = MapTrainingSpec {
            standardize: false,
            basis: BasisKind::ProbabilistHermite,
            ..MapTrainingSpec::with_order(1)
        };
        let (c, _) = train_component(0, &z, &spec).unwrap();
        let slope = Rectifier::Softplus.g(c.coefficients[1]);
        assert!((slope - 0.5).abs() < 0.05, "{slope}");
        assert!((c.coefficients[0] + 1.5).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn recovers_banana_bend() {
        let b = bent_banana_samples(10_000, 11, 0.3);
        let spec = MapTrainingSpec {
            basis: BasisKind::ProbabilistHermite,
            ..MapTrainingSpec::with_order(2)
        };
        let map = train_map(&b, &spec).unwrap();
        let pushed: Vec<f64> = b.iter().map(|y| map.forward(y)[1]).collect();
        let n = pushed.len() as f64;
        let mean = pushed.iter().sum::<f64>() / n;
        let var = pushed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let skew = pushed.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(skew.abs() < 0.1, "{skew}");
        let raw: Vec<f64> = b.iter().map(|y| y[1]).collect();
        let rm = raw.iter().sum::<f64>() / n;
        let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / n;
        let rs = raw.iter().map(|v| (v - rm).powi(3)).sum::<f64>() / n / rv.powf(1.5);
        assert!(rs < -0.5, "raw skewness {rs}");
    }

    #[test]
    fn training_is_deterministic() {
        let b = banana_samples(3000, 12);
        let spec = MapTrainingSpec::with_order(3);
        let a = map_to_json(&train_map(&b, &spec).unwrap());
        let c = map_to_json(&train_map(&b, &spec).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn trained_map_is_monotone_and_invertible() {
        let b = banana_samples(3000, 13);
        let map = train_map(&b, &MapTrainingSpec::with_order(3)).unwrap();
        let t = targets::banana(4.0, 0.01).unwrap();
        let mut noise = NoiseStream::new(14, 0);
        let mut y = vec![0.0; 2];
        for _ in 0..2000 {
            noise.fill(&mut y);
            y.iter_mut().for_each(|v| *v *= 5.0);
            let j = map.jacobian(&y);
            assert!(j[(0, 0)] > 0.0 && j[(1, 1)] > 0.0);
            let back = map.inverse(&map.forward(&y)).unwrap();
            assert!((back[0] - y[0]).abs() + (back[1] - y[1]).abs() < 1e-8);
        }
        assert!(t.log_density(&[0.0, 1.0]).is_finite());
    }

    #[test]
    fn adaptive_order_grows_with_sample_size() {
        let small = banana_samples(200, 31);
        let large = banana_samples(3000, 31);
        let spec = MapTrainingSpec::default();
        let (_, rs, scores) = train_map_adaptive(&small, &spec, 6, 0.2).unwrap();
        assert!(scores.len() < 6, "{scores:?}");
        assert!(scores.iter().all(|s| s.order <= scores.len()));
        let (_, rl, _) = train_map_adaptive(&large, &spec, 6, 0.2).unwrap();
        assert!(rl.spec.total_order >= rs.spec.total_order);
        // the banana needs a quadratic term
        assert!(rl.spec.total_order >= 2);
        assert!(train_map_adaptive(&small, &spec, 0, 0.2).is_err());
        assert!(train_map_adaptive(&small, &spec, 3, 1.0).is_err());
    }
}
