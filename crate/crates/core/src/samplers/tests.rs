use super::*;
use crate::targets::{self, TargetSpec};
use crate::transport::{banana_map, AffineMap};

fn banana() -> TargetDensity {
    targets::banana(4.0, 0.01).unwrap()
}

fn rosenbrock() -> TargetDensity {
    TargetSpec::reference_rosenbrock().build().unwrap()
}

fn random_vec(noise: &mut NoiseStream, d: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; d];
    noise.fill(&mut v);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

fn dense_affine() -> TransportMap {
    let a = DMatrix::from_row_slice(2, 2, &[1.3, 0.4, -0.2, 0.7]);
    TransportMap::Affine(AffineMap::new(a, &[0.3, -0.1]).unwrap())
}

fn step_once(target: &TargetDensity, config: &SamplerConfig, y: &[f64], xi: &[f64]) -> Vec<f64> {
    let mut s = Sampler::new(target, config, y).unwrap();
    s.step(xi).unwrap();
    s.state().to_vec()
}

#[test]
fn ula_examples() {
    let t = targets::standard_normal(3).unwrap();
    let mut ws = StepWorkspace::new(3);
    let y = [0.5, -1.0, 2.0];
    let mut out = [0.0; 3];
    ula_step(&t, &y, 0.1, &[0.0; 3], &mut ws, &mut out).unwrap();
    for i in 0..3 {
        assert!((out[i] - 0.9 * y[i]).abs() < 1e-15);
    }
    ula_step(&t, &y, 0.0, &[1.0, 2.0, 3.0], &mut ws, &mut out).unwrap();
    assert_eq!(out, y);
    let b = banana();
    let mut ws = StepWorkspace::new(2);
    let mut out = [0.0; 2];
    ula_step(&b, &[0.0, 1.0], 0.3, &[0.0; 2], &mut ws, &mut out).unwrap();
    assert_eq!(out, [0.0, 1.0]);
}

#[test]
fn ula_rejects_non_finite_gradient() {
    let b = banana();
    let mut ws = StepWorkspace::new(2);
    let mut out = [0.0; 2];
    assert!(ula_step(&b, &[f64::NAN, 1.0], 0.1, &[0.0; 2], &mut ws, &mut out).is_err());
}

#[test]
fn identity_map_reduces_to_ula_bitwise() {
    let b = banana();
    let id = TransportMap::identity(2);
    let mut noise = NoiseStream::new(1, 0);
    let ula = SamplerConfig::new(Scheme::Ula, 0.05);
    let tm = SamplerConfig::new(Scheme::Tmula, 0.05).with_map(id.clone());
    let em = SamplerConfig::new(Scheme::Emrmld, 0.05).with_map(id.clone());
    let irr = SamplerConfig::new(Scheme::TmulaIrr, 0.05)
        .with_map(id)
        .with_skew(DMatrix::zeros(2, 2));
    for _ in 0..200 {
        let y = random_vec(&mut noise, 2, 3.0);
        let xi = random_vec(&mut noise, 2, 1.0);
        let r = step_once(&b, &ula, &y, &xi);
        for c in [&tm, &em, &irr] {
            let o = step_once(&b, c, &y, &xi);
            assert_eq!(o[0].to_bits(), r[0].to_bits());
            assert_eq!(o[1].to_bits(), r[1].to_bits());
        }
    }
}

#[test]
fn affine_map_tmula_equals_emrmld() {
    let b = banana();
    let map = dense_affine();
    let tm = SamplerConfig::new(Scheme::Tmula, 0.02).with_map(map.clone());
    let em = SamplerConfig::new(Scheme::Emrmld, 0.02).with_map(map);
    let mut noise = NoiseStream::new(2, 0);
    for _ in 0..200 {
        let y = random_vec(&mut noise, 2, 3.0);
        let xi = random_vec(&mut noise, 2, 1.0);
        let a = step_once(&b, &tm, &y, &xi);
        let e = step_once(&b, &em, &y, &xi);
        assert!((a[0] - e[0]).abs() <= 1e-12 * (1.0 + a[0].abs()), "{a:?} {e:?}");
        assert!((a[1] - e[1]).abs() <= 1e-12 * (1.0 + a[1].abs()), "{a:?} {e:?}");
    }
}

#[test]
fn emrmld_with_affine_map_is_preconditioned_ula() {
    let b = banana();
    let a = DMatrix::from_row_slice(2, 2, &[1.3, 0.4, -0.2, 0.7]);
    let map = TransportMap::Affine(AffineMap::new(a.clone(), &[0.0, 0.0]).unwrap());
    let bm = (a.transpose() * &a).try_inverse().unwrap();
    let ainv = a.try_inverse().unwrap();
    let mut ws = StepWorkspace::new(2);
    let y = [1.0, -0.5];
    let xi = [0.3, -1.1];
    let h = 0.01;
    let mut out = [0.0; 2];
    emrmld_step(&b, &map, &y, h, &xi, &mut ws, &mut out).unwrap();
    let g = b.grad_log_density(&y);
    for i in 0..2 {
        let drift = bm[(i, 0)] * g[0] + bm[(i, 1)] * g[1];
        let nz = ainv[(i, 0)] * xi[0] + ainv[(i, 1)] * xi[1];
        let expected = y[i] + h * drift + (2.0 * h).sqrt() * nz;
        assert!((out[i] - expected).abs() < 1e-13);
    }
}

#[test]
fn tmula_banana_fixed_point() {
    let b = banana();
    let map = banana_map(4.0, 0.01).unwrap();
    let mut ws = StepWorkspace::new(2);
    let (mut xo, mut yo) = ([0.0; 2], [0.0; 2]);
    tmula_step(&b, &map, &[0.0, 0.0], &[0.0, 1.0], 0.1, &[0.0; 2], &mut ws, &mut xo, &mut yo).unwrap();
    assert_eq!(xo, [0.0, 0.0]);
    assert!((yo[0]).abs() < 1e-15 && (yo[1] - 1.0).abs() < 1e-15);
}

#[test]
fn irr_rotates_the_score() {
    let t = targets::standard_normal(2).unwrap();
    let id = TransportMap::identity(2);
    let delta = 0.7;
    let d = rotation_skew(delta);
    let mut ws = StepWorkspace::new(2);
    let x = [1.5, -0.5];
    let h = 0.1;
    let (mut xo, mut yo) = ([0.0; 2], [0.0; 2]);
    reference_irr_step(&t, &id, &x, &x, h, &[0.0; 2], &d, &mut ws, &mut xo, &mut yo).unwrap();
    let drift = [-x[0] - delta * x[1], -x[1] + delta * x[0]];
    for i in 0..2 {
        assert!((xo[i] - (x[i] + h * drift[i])).abs() < 1e-15);
    }
    assert_eq!(xo, yo);
}

#[test]
fn skew_validation() {
    let good = rotation_skew(1.0);
    assert!(validate_skew(&good).is_ok());
    let mut bad = good.clone();
    bad[(0, 1)] += 1e-9;
    assert!(validate_skew(&bad).is_err());
    let c = SamplerConfig::new(Scheme::TmulaIrr, 0.1)
        .with_map(TransportMap::identity(2))
        .with_skew(bad);
    assert!(c.validate(2).is_err());
}

#[test]
fn config_combinations() {
    assert!(SamplerConfig::new(Scheme::Tmula, 0.1).validate(2).is_err());
    assert!(SamplerConfig::new(Scheme::Rmld, 0.1).validate(2).is_err());
    assert!(SamplerConfig::new(Scheme::TmulaIrr, 0.1)
        .with_map(TransportMap::identity(2))
        .validate(2)
        .is_err());
    assert!(SamplerConfig::new(Scheme::Ula, -1.0).validate(2).is_err());
    assert!(SamplerConfig::new(Scheme::Tmula, 0.1)
        .with_map(TransportMap::identity(3))
        .validate(2)
        .is_err());
    let b = banana();
    assert!(run_chain(&b, &SamplerConfig::new(Scheme::Ula, 0.1), &[0.0, 0.0], 0, 1).is_err());
}

#[test]
fn tmuila_standard_normal_reference_solves_in_one_iteration() {
    let t = targets::anisotropic_gaussian(1.0, 9.0).unwrap();
    let map = t.exact_map.clone().unwrap();
    let mut ws = StepWorkspace::new(2);
    let x = [1.2, -0.7];
    let h = 0.25;
    let (mut xo, mut yo) = ([0.0; 2], [0.0; 2]);
    let opts = ImplicitSolverOptions::default();
    tmuila_step(&t, &map, &x, h, &[0.0; 2], &opts, &mut ws, &mut xo, &mut yo).unwrap();
    assert_eq!(ws.last_newton_iterations, 1);
    for i in 0..2 {
        assert!((xo[i] - x[i] / (1.0 + h)).abs() < 1e-10);
    }
    let back = map.inverse(&xo).unwrap();
    assert!((back[0] - yo[0]).abs() < 1e-15 && (back[1] - yo[1]).abs() < 1e-15);
}

#[test]
fn implicit_steps_at_zero_step_size_are_noise_maps() {
    let b = banana();
    let map = banana_map(4.0, 0.01).unwrap();
    let mut ws = StepWorkspace::new(2);
    let opts = ImplicitSolverOptions::default();
    let y = [1.0, 0.4];
    let x = map.forward(&y);
    let (mut xo, mut yo) = ([0.0; 2], [0.0; 2]);
    tmuila_step(&b, &map, &x, 0.0, &[0.4, 0.1], &opts, &mut ws, &mut xo, &mut yo).unwrap();
    assert_eq!(xo.to_vec(), x);
    let mut out = [0.0; 2];
    uila_step(&b, &y, 0.0, &[0.4, 0.1], &opts, &mut ws, &mut out).unwrap();
    assert_eq!(out, y);
}

#[test]
fn uila_gaussian_closed_form() {
    let sigma2 = 2.5;
    let cov = DMatrix::from_diagonal_element(1, 1, sigma2);
    let t = targets::gaussian(&[0.0], &cov).unwrap();
    let mut ws = StepWorkspace::new(1);
    let mut out = [0.0];
    let h = 0.3;
    uila_step(&t, &[2.0], h, &[0.0], &ImplicitSolverOptions::default(), &mut ws, &mut out).unwrap();
    assert!((out[0] - 2.0 / (1.0 + h / sigma2)).abs() < 1e-10);
}

#[test]
fn funnel_metric_divergence_matches_finite_differences() {
    let m = FunnelFisherMetric::new(100.0, 0.5).unwrap();
    let (mut b, mut div, mut r) = ([0.0; 4], [0.0; 2], [0.0; 4]);
    for y in [[0.3, -0.5], [-1.0, 0.2], [2.0, -2.5]] {
        m.eval(&y, &mut b, &mut div, &mut r).unwrap();
        let eps = 1e-6;
        let (mut bp, mut bm) = ([0.0; 4], [0.0; 4]);
        let (mut dd, mut rr) = ([0.0; 2], [0.0; 4]);
        m.eval(&[y[0], y[1] + eps], &mut bp, &mut dd, &mut rr).unwrap();
        m.eval(&[y[0], y[1] - eps], &mut bm, &mut dd, &mut rr).unwrap();
        let fd = (bp[3] - bm[3]) / (2.0 * eps);
        assert!((fd - div[1]).abs() <= 1e-6 * fd.abs().max(1.0));
        assert_eq!(div[0], 0.0);
        for i in 0..2 {
            for j in 0..2 {
                let rrt: f64 = (0..2).map(|k| r[i * 2 + k] * r[j * 2 + k]).sum();
                assert!((rrt - b[i * 2 + j]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn zero_step_chain_repeats_the_start() {
    let b = banana();
    let map = banana_map(4.0, 0.01).unwrap();
    let y0 = [0.7, 1.3];
    let metric: Arc<dyn Metric> = Arc::new(FunnelFisherMetric::new(10.0, 0.5).unwrap());
    for scheme in [Scheme::Ula, Scheme::Tmula, Scheme::Emrmld, Scheme::TmulaIrr, Scheme::Rmld] {
        let c = SamplerConfig::new(scheme, 0.0)
            .with_map(map.clone())
            .with_skew(rotation_skew(1.0))
            .with_metric(metric.clone());
        let chain = run_chain(&b, &c, &y0, 1, 9).unwrap();
        assert_eq!(chain.len(), 2);
        for r in chain.rows() {
            assert!((r[0] - y0[0]).abs() < 1e-14 && (r[1] - y0[1]).abs() < 1e-14, "{scheme}: {r:?}");
        }
    }
}

#[test]
fn chains_are_deterministic_and_csv_round_trips() {
    let b = banana();
    let c = SamplerConfig::new(Scheme::Tmula, 0.01).with_map(banana_map(4.0, 0.01).unwrap());
    let a = run_chain(&b, &c, &[0.0, 1.0], 500, 42).unwrap();
    let a2 = run_chain(&b, &c, &[0.0, 1.0], 500, 42).unwrap();
    let (mut buf1, mut buf2) = (Vec::new(), Vec::new());
    write_chain_csv(&a, 1, &mut buf1).unwrap();
    write_chain_csv(&a2, 1, &mut buf2).unwrap();
    assert_eq!(buf1, buf2);
    let text = String::from_utf8(buf1.clone()).unwrap();
    assert!(text.starts_with("step,y_1,y_2\n0,"));
    let (steps, states, d) = read_chain_csv(&buf1[..]).unwrap();
    assert_eq!(d, 2);
    assert_eq!(steps.len(), 501);
    assert_eq!(states, a.states);
    let other = run_chain(&b, &c, &[0.0, 1.0], 500, 43).unwrap();
    assert_ne!(other.states, a.states);
    assert!(read_chain_csv(&b"step,x\n0,1\n"[..]).is_err());
}

#[test]
fn parallel_chains_match_sequential_runs() {
    let b = banana();
    let c = SamplerConfig::new(Scheme::Ula, 0.01);
    let chains = run_chains(&b, &c, &[0.0, 1.0], 200, 5, 4, 1).unwrap();
    for (id, ch) in chains.iter().enumerate() {
        let single = run_chain_thinned(&b, &c, &[0.0, 1.0], 200, 5, id as u64, 1).unwrap();
        assert_eq!(&single, ch);
    }
    assert_ne!(chains[0].states, chains[1].states);
}

#[test]
fn explicit_ula_is_transient_on_hybrid_rosenbrock() {
    let t = rosenbrock();
    let y0 = t.exact_map.as_ref().unwrap().inverse(&vec![0.0; t.dim]).unwrap();
    let c = SamplerConfig::new(Scheme::Ula, 0.01);
    let chain = run_chain(&t, &c, &y0, 10_000, 1).unwrap();
    let at = chain.diverged_at.expect("ULA should diverge");
    assert!(at <= 10_000);
    assert_eq!(chain.len(), at);
    assert!(chain.states.iter().all(|v| v.is_finite()));
}

#[test]
fn implicit_schemes_are_stable_on_hybrid_rosenbrock() {
    let t = rosenbrock();
    let map = t.exact_map.clone().unwrap();
    let y0 = map.inverse(&vec![0.0; t.dim]).unwrap();
    let tm = SamplerConfig::new(Scheme::Tmuila, 0.01).with_map(map);
    let s = run_chain_streaming(&t, &tm, &y0, 100_000, 1, 0, |_, _| {}).unwrap();
    assert_eq!(s.diverged_at, None);
    let u = SamplerConfig::new(Scheme::Uila, 0.01);
    let mut finite = true;
    let s = run_chain_streaming(&t, &u, &y0, 100_000, 1, 0, |_, y| finite &= y.iter().all(|v| v.is_finite())).unwrap();
    assert_eq!(s.diverged_at, None);
    assert!(finite);
}

/// Mean of F_TMULA − F_EMRMLD over common noise, with the leading noise terms
/// removed by Hermite control variates of degree ≤ 2 (their means are known).
fn first_moment_gap(h: f64, n: usize, seed: u64) -> f64 {
    let b = banana();
    let map = banana_map(4.0, 0.01).unwrap();
    let y = [1.0, 1.2];
    let x = map.forward(&y);
    let mut ws = StepWorkspace::new(2);
    let mut noise = NoiseStream::new(seed, 0);
    let mut xi = [0.0; 2];
    let (mut xo, mut yo, mut eo) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    // regress the second coordinate of the gap on 1, ξ₁, ξ₂, ξ₁²−1, ξ₂²−1, ξ₁ξ₂
    let p = 6;
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for _ in 0..n {
        noise.fill(&mut xi);
        tmula_step(&b, &map, &x, &y, h, &xi, &mut ws, &mut xo, &mut yo).unwrap();
        emrmld_step(&b, &map, &y, h, &xi, &mut ws, &mut eo).unwrap();
        let gap = yo[1] - eo[1];
        let f = [1.0, xi[0], xi[1], xi[0] * xi[0] - 1.0, xi[1] * xi[1] - 1.0, xi[0] * xi[1]];
        for i in 0..p {
            xty[i] += f[i] * gap;
            for j in 0..p {
                xtx[i * p + j] += f[i] * f[j];
            }
        }
    }
    let coef = crate::linalg::solve_general(&xtx, p, &xty).unwrap();
    coef[0]
}

#[test]
fn tmula_and_emrmld_share_the_first_moment() {
    let n = 1_000_000;
    let g1 = first_moment_gap(1e-2, n, 3).abs();
    let g2 = first_moment_gap(1e-3, n, 4).abs();
    let exponent = (g1 / g2).log10();
    assert!(exponent >= 1.4, "gaps {g1:e} {g2:e}, exponent {exponent}");
}
