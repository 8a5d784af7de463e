use hdbo::seed;
use hdbo::surrogate::{log_marginal_likelihood, GpConfig, GpModel, Hyperparams, KernelKind};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

// Independent kernel evaluation for the oracles below.
fn kern(kind: KernelKind, hp: &Hyperparams, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        KernelKind::Matern52Ard => {
            let r2: f64 = a.iter().zip(b).zip(&hp.lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
            let r = (5.0 * r2).sqrt();
            hp.signal_variance * (1.0 + r + r * r / 3.0) * (-r).exp()
        }
        KernelKind::RbfIsotropic => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
            hp.signal_variance * (-0.5 * d2 / hp.lengthscales[0].powi(2)).exp()
        }
    }
}

fn dense_k(kind: KernelKind, hp: &Hyperparams, x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| kern(kind, hp, &x[i], &x[j]) + if i == j { hp.noise_variance } else { 0.0 })
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    (y.iter().map(|v| (v - m) / s).collect(), m, s)
}

fn dense_lml(kind: KernelKind, hp: &Hyperparams, x: &[Vec<f64>], ys: &[f64]) -> f64 {
    let k = dense_k(kind, hp, x);
    let inv = k.clone().try_inverse().unwrap();
    let y = DVector::from_column_slice(ys);
    let det = k.determinant();
    -0.5 * y.dot(&(&inv * &y)) - 0.5 * det.ln() - 0.5 * ys.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn random_data(rng: &mut seed::Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let y = x.iter().map(|p| p.iter().map(|v| (3.0 * v).sin()).sum::<f64>() + rng.random_range(-0.1..0.1)).collect();
    (x, y)
}

fn random_hyper(rng: &mut seed::Rng, kind: KernelKind, d: usize, noise: f64) -> Hyperparams {
    Hyperparams {
        lengthscales: (0..kind.n_lengthscales(d)).map(|_| rng.random_range(0.2..2.0)).collect(),
        signal_variance: rng.random_range(0.5..2.0),
        noise_variance: noise,
    }
}

#[test]
fn predict_matches_dense_inverse() {
    let mut rng = seed::rng(11);
    for case in 0..50 {
        let kind = if case % 2 == 0 { KernelKind::Matern52Ard } else { KernelKind::RbfIsotropic };
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=4);
        let (x, y) = random_data(&mut rng, n, d);
        let hp = random_hyper(&mut rng, kind, d, 1e-2);
        let cfg = GpConfig { kernel: kind, noise_variance: 1e-2, ..Default::default() };
        let model = GpModel::with_hyperparams(&x, &y, &cfg, hp.clone()).unwrap();

        let (ys, m, s) = standardize(&y);
        let inv = dense_k(kind, &hp, &x).try_inverse().unwrap();
        let yv = DVector::from_column_slice(&ys);
        for _ in 0..5 {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-0.2..1.2)).collect();
            let ks = DVector::from_iterator(n, x.iter().map(|xi| kern(kind, &hp, xi, &p)));
            let mean = ks.dot(&(&inv * &yv)) * s + m;
            let var = kern(kind, &hp, &p, &p) - ks.dot(&(&inv * &ks));
            let std = var.max(0.0).sqrt() * s;
            let (pm, ps) = model.predict(&p).unwrap();
            assert!((pm - mean).abs() < 1e-8, "case {case}: mean {pm} vs {mean}");
            assert!((ps - std).abs() < 1e-8, "case {case}: std {ps} vs {std}");
        }
    }
}

#[test]
fn three_point_fit_dominates_random_hyperparameters() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0]];
    let y = [0.0, 1.0, 2.0];
    let cfg = GpConfig::default();
    let model = GpModel::fit(&x, &y, &cfg, 5).unwrap();
    let (ys, _, _) = standardize(&y);
    let fitted = dense_lml(cfg.kernel, model.hyperparams(), &x, &ys);
    assert!((fitted - model.log_marginal_likelihood()).abs() < 1e-8);
    let mut rng = seed::rng(77);
    for _ in 0..100 {
        let hp = Hyperparams {
            lengthscales: vec![10f64.powf(rng.random_range(-3.0..3.0))],
            signal_variance: 10f64.powf(rng.random_range(-3.0..3.0)),
            noise_variance: cfg.noise_variance,
        };
        let other = dense_lml(cfg.kernel, &hp, &x, &ys);
        assert!(fitted >= other - 1e-9, "fitted {fitted} < random {other} at {hp:?}");
    }
}

#[test]
fn lml_gradient_matches_central_differences() {
    let mut rng = seed::rng(21);
    for case in 0..20 {
        let kind = if case % 2 == 0 { KernelKind::Matern52Ard } else { KernelKind::RbfIsotropic };
        let d = 3;
        let (x, y) = random_data(&mut rng, 5, d);
        let (ys, _, _) = standardize(&y);
        let xm = DMatrix::from_fn(5, d, |i, j| x[i][j]);
        let yv = DVector::from_column_slice(&ys);
        let theta: Vec<f64> = (0..=kind.n_lengthscales(d)).map(|_| rng.random_range(-1.5..1.0)).collect();
        let (v, g) = log_marginal_likelihood(kind, &xm, &yv, 1e-4, &theta).unwrap();
        let hp = Hyperparams::from_log(&theta, 1e-4);
        assert!((v - dense_lml(kind, &hp, &x, &ys)).abs() < 1e-7 * v.abs().max(1.0));
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fp = log_marginal_likelihood(kind, &xm, &yv, 1e-4, &tp).unwrap().0;
            let fm = log_marginal_likelihood(kind, &xm, &yv, 1e-4, &tm).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / g[i].abs().max(1e-2);
            assert!(rel < 1e-4, "case {case} param {i}: fd {fd} vs analytic {}", g[i]);
        }
    }
}

#[test]
fn refit_is_deterministic() {
    let mut rng = seed::rng(3);
    let (x, y) = random_data(&mut rng, 12, 3);
    let a = GpModel::fit(&x, &y, &GpConfig::default(), 9).unwrap();
    let b = GpModel::fit(&x, &y, &GpConfig::default(), 9).unwrap();
    assert_eq!(a.hyperparams(), b.hyperparams());
}

#[test]
fn posterior_samples_match_predictive_moments() {
    let x = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3]];
    let y = [1.0, -0.5, 2.0];
    let model = GpModel::fit(&x, &y, &GpConfig::default(), 1).unwrap();
    let far = vec![40.0, -40.0];
    let (mean, std) = model.predict(&far).unwrap();
    let draws = model.sample_posterior(std::slice::from_ref(&far), 10_000, 4).unwrap();
    let avg = draws.iter().map(|s| s[0]).sum::<f64>() / draws.len() as f64;
    assert!((avg - mean).abs() < 3.0 * std / 100.0, "{avg} vs {mean} ± {std}");
    assert!(model.sample_posterior(std::slice::from_ref(&far), 0, 4).unwrap().is_empty());
    assert_eq!(draws, model.sample_posterior(&[far], 10_000, 4).unwrap());
}

#[test]
fn far_point_reverts_to_prior() {
    let x = vec![vec![0.1], vec![0.4], vec![0.7]];
    let y = [2.0, 4.0, 3.0];
    let model = GpModel::fit(&x, &y, &GpConfig::default(), 2).unwrap();
    let (mean, std) = model.predict(&[1e4]).unwrap();
    let (m, s) = model.standardization();
    assert!((mean - m).abs() < 1e-9);
    assert!((std - model.hyperparams().signal_variance.sqrt() * s).abs() < 1e-9);
}

#[test]
fn noiseless_observation_collapses_variance() {
    let mut rng = seed::rng(8);
    let (mut x, mut y) = random_data(&mut rng, 8, 2);
    let cfg = GpConfig { noise_variance: 0.0, ..Default::default() };
    let p = vec![0.33, 0.66];
    let before = GpModel::fit(&x, &y, &cfg, 1).unwrap().predict(&p).unwrap().1;
    x.push(p.clone());
    y.push(0.7);
    let model = GpModel::fit(&x, &y, &cfg, 1).unwrap();
    let (mean, std) = model.predict(&p).unwrap();
    assert!(std <= 1e-5, "std {std} (was {before})");
    assert!((mean - 0.7).abs() < 1e-4);
    for xi in &x {
        assert!(model.predict(xi).unwrap().1 >= 0.0);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn predictive_std_is_non_negative(seed_v in 0u64..1000, px in -3.0f64..3.0, py in -3.0f64..3.0) {
            let mut rng = seed::rng(seed_v);
            let (x, y) = random_data(&mut rng, 6, 2);
            let hp = random_hyper(&mut rng, KernelKind::Matern52Ard, 2, 1e-4);
            let model = GpModel::with_hyperparams(&x, &y, &GpConfig::default(), hp).unwrap();
            let (m, s) = model.predict(&[px, py]).unwrap();
            prop_assert!(s >= 0.0 && m.is_finite());
        }
    }
}
