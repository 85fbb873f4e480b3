use super::*;
use crate::samplers::{run_chain, NoiseStream, Scheme};
use crate::targets;
use crate::transport::Transport;

fn normal_draws(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; n * d];
    NoiseStream::new(seed, 0).fill(&mut v);
    v
}

fn std_score(y: &[f64], s: &mut [f64]) {
    for i in 0..y.len() {
        s[i] = -y[i];
    }
}

#[test]
fn registry() {
    let y = [1.0, 2.0];
    assert_eq!(TestFunction::by_name("sum").unwrap().eval(&y), 3.0);
    assert_eq!(TestFunction::by_name("sum_sq").unwrap().eval(&y), 5.0);
    assert_eq!(TestFunction::by_name("sum_sq_plus_sum").unwrap().eval(&y), 8.0);
    assert_eq!(TestFunction::by_name("exp_y2").unwrap().eval(&y), 2f64.exp());
    assert_eq!(TestFunction::by_name("y2").unwrap().eval(&y), 2.0);
    assert_eq!(TestFunction::by_name("y1_sq").unwrap().eval(&y), 1.0);
    assert!(TestFunction::by_name("y0").is_err());
    assert!(TestFunction::by_name("nope").is_err());
    assert!(TestFunction::by_name("exp_y2").unwrap().check_dim(3).is_err());
}

#[test]
fn ergodic_average_examples() {
    let states = normal_draws(100, 2, 1);
    let c = TestFunction::new("c", None, |_| 2.5);
    assert_eq!(ergodic_average(&states, 2, &c, 10).unwrap(), 2.5);
    let zeros = vec![0.0; 40];
    let sq = TestFunction::by_name("sum_sq").unwrap();
    assert_eq!(ergodic_average(&zeros, 2, &sq, 0).unwrap(), 0.0);
    assert!(ergodic_average(&zeros, 2, &sq, 20).is_err());
    let draws = normal_draws(1_000_000, 1, 2);
    let m = ergodic_average(&draws, 1, &sq, 0).unwrap();
    assert!((m - 1.0).abs() < 3.0 * (2.0f64 / 1e6).sqrt(), "{m}");
}

#[test]
fn batch_means_examples() {
    let phi = TestFunction::by_name("y1").unwrap();
    let draws = normal_draws(1_000_000, 1, 3);
    let iid = batch_means_avar(&draws, 1, &phi, 0).unwrap();
    assert!((iid - 1.0).abs() < 0.25, "{iid}");
    let doubled: Vec<f64> = draws.iter().flat_map(|&v| [v, v]).collect();
    let dup = batch_means_avar(&doubled[..1_000_000], 1, &phi, 0).unwrap();
    assert!((dup / iid - 2.0).abs() < 0.5, "{dup} vs {iid}");
    assert_eq!(batch_means_avar(&vec![3.0; 500], 1, &phi, 0).unwrap(), 0.0);
    assert!(matches!(
        batch_means_avar(&draws[..150], 1, &phi, 60),
        Err(Error::ChainTooShort { .. })
    ));
}

#[test]
fn batch_means_affine_scaling() {
    let draws = normal_draws(20_000, 2, 4);
    let phi = TestFunction::by_name("sum_sq").unwrap();
    let a = -3.7;
    let shifted = TestFunction::new("affine", None, move |y: &[f64]| a * y.iter().map(|v| v * v).sum::<f64>() + 11.0);
    let v1 = batch_means_avar(&draws, 2, &phi, 0).unwrap();
    let v2 = batch_means_avar(&draws, 2, &shifted, 0).unwrap();
    assert!((v2 - a * a * v1).abs() <= 1e-10 * v2.abs());
}

#[test]
fn batch_means_streaming_matches_slice() {
    let series = normal_draws(12_345, 1, 5);
    let mut bm = BatchMeans::new(series.len()).unwrap();
    series.iter().for_each(|&v| bm.push(v));
    assert_eq!(bm.avar().unwrap(), batch_means_avar_series(&series).unwrap());
    // M = 111 batches of B = 111
    let m = (12_345f64).sqrt().floor() as usize;
    let b = 12_345 / m;
    let means: Vec<f64> = (0..m).map(|i| series[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let g = means.iter().sum::<f64>() / m as f64;
    let oracle = b as f64 * means.iter().map(|x| (x - g).powi(2)).sum::<f64>() / (m - 1) as f64;
    assert!((bm.avar().unwrap() - oracle).abs() < 1e-12 * oracle);
}

/// Independent Stein kernel using central differences of the IMQ base kernel.
fn stein_oracle(x: &[f64], y: &[f64], sx: &[f64], sy: &[f64], c: f64, beta: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let r2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        (c * c + r2).powf(beta)
    };
    let d = x.len();
    let e = 1e-4;
    let mut total = k(x, y) * sx.iter().zip(sy).map(|(a, b)| a * b).sum::<f64>();
    for i in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += e;
        xm[i] -= e;
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[i] += e;
        ym[i] -= e;
        total += (k(&xp, y) - k(&xm, y)) / (2.0 * e) * sy[i];
        total += (k(x, &yp) - k(x, &ym)) / (2.0 * e) * sx[i];
        total += (k(&xp, &yp) - k(&xp, &ym) - k(&xm, &yp) + k(&xm, &ym)) / (4.0 * e * e);
    }
    total
}

#[test]
fn stein_kernel_matches_oracle() {
    let kernel = ImqKernel { c: 1.3, beta: -0.4 };
    let mut noise = NoiseStream::new(6, 0);
    let mut v = vec![0.0; 12];
    for _ in 0..50 {
        noise.fill(&mut v);
        let (x, y, sx, sy) = (&v[0..3], &v[3..6], &v[6..9], &v[9..12]);
        let a = kernel.stein(x, y, sx, sy);
        let b = stein_oracle(x, y, sx, sy, kernel.c, kernel.beta);
        assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn ksd_single_point_at_the_mode() {
    let k2 = ksd_squared(&[0.0, 0.0], 2, std_score, &ImqKernel::default(), false).unwrap();
    assert!((k2 - 2.0).abs() < 1e-15);
    assert!(ksd_squared(&[0.0, 0.0], 2, std_score, &ImqKernel::default(), true).is_err());
    assert!(ksd(&[0.0, 0.0], 2, std_score, &ImqKernel { c: 1.0, beta: 0.5 }).is_err());
    let nan = |_: &[f64], s: &mut [f64]| s.iter_mut().for_each(|v| *v = f64::NAN);
    assert!(matches!(ksd(&[0.0, 0.0], 2, nan, &ImqKernel::default()), Err(Error::NonFiniteScore(0))));
}

#[test]
fn ksd_is_permutation_invariant() {
    let pts = normal_draws(300, 2, 7);
    let mut rev: Vec<f64> = pts.chunks_exact(2).rev().flatten().copied().collect();
    let a = ksd(&pts, 2, std_score, &ImqKernel::default()).unwrap();
    let b = ksd(&rev, 2, std_score, &ImqKernel::default()).unwrap();
    assert!((a - b).abs() <= 1e-14 * a);
    rev.swap(0, 2);
    rev.swap(1, 3);
    let c = ksd(&rev, 2, std_score, &ImqKernel::default()).unwrap();
    assert!((a - c).abs() <= 1e-14 * a);
}

#[test]
fn ksd_orders_exact_and_offset_samples() {
    let n = 2_000;
    for seed in 0..5 {
        let pts = normal_draws(n, 2, 100 + seed);
        let off: Vec<f64> = pts.iter().map(|v| v + 2.0).collect();
        let a = ksd(&pts, 2, std_score, &ImqKernel::default()).unwrap();
        let b = ksd(&off, 2, std_score, &ImqKernel::default()).unwrap();
        assert!(a < b, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn ksd_u_statistic_is_unbiased_near_zero() {
    let pts = normal_draws(2_000, 2, 8);
    let u = ksd_squared(&pts, 2, std_score, &ImqKernel::default(), true).unwrap();
    let v = ksd_squared(&pts, 2, std_score, &ImqKernel::default(), false).unwrap();
    assert!(u.abs() < 5e-3 && v > u, "{u} {v}");
}

#[test]
fn mse_identity_and_unbiased_iid_chains() {
    let truth = 0.0;
    let phi = TestFunction::by_name("y1").unwrap();
    let chains: Vec<(u64, u64, Option<usize>, Vec<f64>)> = (0..20)
        .map(|i| (i, 9, None, normal_draws(5_000, 1, 200 + i)))
        .collect();
    let report = summarize_chains("iid", 0.0, &phi, Some(truth), &chains, 10);
    for r in &report.mse {
        assert!((r.mse - (r.bias * r.bias + r.variance)).abs() <= 1e-10);
    }
    let last = report.mse.last().unwrap();
    assert_eq!(last.length, 5_000);
    assert!(last.bias.abs() < 3.0 / (20.0f64 * 5_000.0).sqrt());
    let full = DiagnosticsReport {
        metadata: ReportMetadata {
            seeds: vec![9],
            steps: 5000,
            burn_in: 0,
            n_chains: 20,
            notes: vec![],
        },
        entries: vec![report],
    };
    assert!(full.mse_identity_defect() <= 1e-10);
}

#[test]
fn mse_study_counts_diverged_chains() {
    let t = crate::targets::TargetSpec::reference_rosenbrock().build().unwrap();
    let y0 = t.exact_map.as_ref().unwrap().inverse(&vec![0.0; t.dim]).unwrap();
    let phi = TestFunction::by_name("sum").unwrap();
    let settings = StudySettings {
        n_chains: 3,
        steps: 20_000,
        burn_in: 100,
        seed: 1,
        checkpoints: 5,
    };
    let report = mse_study(&t, &[SamplerConfig::new(Scheme::Ula, 0.01)], &y0, &phi, 0.0, &settings).unwrap();
    let e = &report.entries[0];
    assert_eq!(e.n_chains, 3);
    assert_eq!(e.diverged_chains, e.chains.iter().filter(|c| c.diverged_at.is_some()).count());
    assert!(e.diverged_chains >= 1);
}

#[test]
fn mse_study_on_gaussian_ula() {
    let t = targets::standard_normal(2).unwrap();
    let phi = TestFunction::by_name("sum_sq").unwrap();
    let settings = StudySettings {
        n_chains: 8,
        steps: 20_000,
        burn_in: 1_000,
        seed: 3,
        checkpoints: 6,
    };
    let configs = [SamplerConfig::new(Scheme::Ula, 0.05), SamplerConfig::new(Scheme::Uila, 0.05)];
    let report = mse_study(&t, &configs, &[0.0, 0.0], &phi, 2.0, &settings).unwrap();
    assert_eq!(report.entries.len(), 2);
    // stationary variances per coordinate: ULA 2/(2 − h), UILA 2(1 + h)²/(2 + h)
    let h: f64 = 0.05;
    let ula = report.entries[0].mean.unwrap();
    let uila = report.entries[1].mean.unwrap();
    assert!((ula - 4.0 / (2.0 - h)).abs() < 0.06, "{ula}");
    assert!((uila - 4.0 * (1.0 + h).powi(2) / (2.0 + h)).abs() < 0.06, "{uila}");
    assert!(uila > ula);
    assert!(report.mse_identity_defect() <= 1e-10);
    let json = serde_json::to_string(&report).unwrap();
    let back: DiagnosticsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn bias_sweep_gaussian_odd_function_has_no_bias() {
    let t = targets::standard_normal(1).unwrap();
    let phi = TestFunction::by_name("y1").unwrap();
    let tmpl = SamplerConfig::new(Scheme::Ula, 0.1);
    let sweep = bias_sweep(&t, &tmpl, &[0.0], &phi, 0.0, &[0.1, 0.05, 0.025], 2_000.0, 10.0, 1).unwrap();
    let lam = sweep.lambda_hat.unwrap();
    let se = sweep.lambda_stderr.unwrap();
    assert!(lam.abs() < 2.0 * se + 1e-12, "{lam} ± {se}");
}

#[test]
fn bias_sweep_recovers_ula_gaussian_constant() {
    // ULA on N(0,1): stationary variance 1/(1 − h/2), so ê(y², h) = h/2 + O(h²)
    // and λ₁ = −1/2
    let t = targets::standard_normal(1).unwrap();
    let phi = TestFunction::by_name("y1_sq").unwrap();
    let tmpl = SamplerConfig::new(Scheme::Ula, 0.1);
    let sweep = bias_sweep(&t, &tmpl, &[0.0], &phi, 1.0, &[0.1, 0.05], 20_000.0, 10.0, 12).unwrap();
    let lam = sweep.lambda_hat.unwrap();
    assert!((lam + 0.5).abs() < 0.1 + 3.0 * sweep.lambda_stderr.unwrap(), "{lam}");
}

#[test]
fn wasserstein_bound_examples() {
    let (m, l) = (1.0, 1.0);
    let h = 0.5;
    assert_eq!(1.0 - kappa(m, l) * h / 2.0, 0.75);
    for rho in [1.0, 0.5] {
        let b0 = wasserstein_bound(1.0, 2.0, 0.3, 0, 2, 1.5, rho).unwrap();
        assert!((b0 - (2.0 * 1.5 + 4.0) / (rho * rho)).abs() < 1e-12);
    }
    // non-increasing in k whenever 2‖y − y*‖² + 2d/m ≥ C (here C ≈ 12.3)
    let c = discretization_constant(1.0, 2.0, 0.3, 2);
    assert!(c > 12.0 && c < 12.5, "{c}");
    let mut prev = f64::INFINITY;
    for k in 0..=1000 {
        let b = wasserstein_bound(1.0, 2.0, 0.3, k, 2, 5.0, 1.0).unwrap();
        assert!(b <= prev);
        prev = b;
    }
    assert!(wasserstein_bound(1.0, 2.0, 0.34, 1, 2, 1.0, 1.0).is_err());
    assert!(wasserstein_bound(2.0, 1.0, 0.1, 1, 2, 1.0, 1.0).is_err());
}

/// Direct transcription of the ULA bound with independently named terms.
fn ula_bound_oracle(m: f64, big_l: f64, h: f64, k: u64, d: usize, dist0_sq: f64) -> f64 {
    let kap = 2.0 * m * big_l / (m + big_l);
    let df = d as f64;
    let c = 2.0 * big_l.powi(2) * df / kap * (h * (1.0 / kap + h)) * (2.0 + big_l.powi(2) * h / m + big_l.powi(2) * h.powi(2) / 6.0);
    (1.0 - kap * h / 2.0).powi(k as i32) * (2.0 * dist0_sq + 2.0 * df / m - c) + c
}

#[test]
fn wasserstein_bound_reproduces_ula_theorem() {
    for &(m, l, h, k, d, r0) in &[
        (1.0, 1.0, 0.5, 10u64, 2usize, 3.0),
        (0.5, 4.0, 0.1, 57, 3, 0.2),
        (2.0, 2.5, 0.2, 0, 10, 1.0),
        (1.0, 10.0, 0.05, 400, 1, 9.0),
    ] {
        let a = wasserstein_bound(m, l, h, k, d, r0, 1.0).unwrap();
        let b = ula_bound_oracle(m, l, h, k, d, r0);
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn gaussian_w2_examples() {
    let i2 = DMatrix::<f64>::identity(2, 2);
    let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    assert!(gaussian_w2(&[1.0, 2.0], &c, &[1.0, 2.0], &c).unwrap() < 1e-12);
    let one = DMatrix::from_element(1, 1, 1.0);
    assert!((gaussian_w2(&[0.0], &one, &[1.0], &one).unwrap() - 1.0).abs() < 1e-14);
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
    assert!((gaussian_w2(&[0.0, 0.0], &d, &[0.0, 0.0], &i2).unwrap() - 1.0).abs() < 1e-12);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(gaussian_w2(&[0.0, 0.0], &bad, &[0.0, 0.0], &i2).is_err());
}

#[test]
fn sample_moments_and_subsampling() {
    let pts = normal_draws(50_000, 2, 13);
    let (m, c) = sample_mean_cov(&pts, 2);
    assert!(m[0].abs() < 0.02 && (c[(0, 0)] - 1.0).abs() < 0.03);
    let sub = subsample_rows(&pts, 2, 100, 1000);
    assert_eq!(sub.len(), 2000);
    assert_eq!(&sub[..2], &pts[200..202]);
    let chain = run_chain(&targets::standard_normal(2).unwrap(), &SamplerConfig::new(Scheme::Ula, 0.1), &[0.0, 0.0], 10, 1).unwrap();
    assert_eq!(subsample_rows(&chain.states, 2, 0, 100).len(), 22);
}
