//! (μ/μ_w, λ)-CMA-ES with cumulative step-size adaptation and rank-one plus
//! rank-μ covariance updates, using the usual default strategy parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Bounds, Objective};
use crate::run::{Archive, Extra, Observer, RunConfig, Session};
use crate::seed;

const EIGEN_FLOOR: f64 = 1e-14;
const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesConfig {
    pub population_size: usize,
    pub sigma0: f64,
}

impl CmaesConfig {
    /// `λ = ⌊4 + 3 ln dim⌋`, `σ0 = 1`.
    pub fn for_dim(dim: usize) -> Self {
        CmaesConfig { population_size: default_population(dim), sigma0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::invalid("population_size must be at least 4"));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::invalid("sigma0 must be positive"));
        }
        Ok(())
    }
}

pub fn default_population(dim: usize) -> usize {
    (4.0 + 3.0 * (dim as f64).ln()).floor() as usize
}

/// Ask/tell state of the strategy.
#[derive(Debug, Clone)]
pub struct Cmaes {
    n: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mueff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    pc: DVector<f64>,
    ps: DVector<f64>,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    generation: usize,
    repairs: usize,
}

impl Cmaes {
    pub fn new(mean: &[f64], sigma: f64, lambda: usize) -> Self {
        let n = mean.len();
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Cmaes {
            n,
            lambda,
            mu,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            mean: DVector::from_column_slice(mean),
            sigma,
            pc: DVector::zeros(n),
            ps: DVector::zeros(n),
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            generation: 0,
            repairs: 0,
        }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Number of eigenvalue floor repairs so far.
    pub fn repairs(&self) -> usize {
        self.repairs
    }

    /// One offspring `m + σ B D z`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.basis * z.component_mul(&self.scales);
        (&self.mean + y * self.sigma).iter().copied().collect()
    }

    /// Updates the distribution from a full generation of `(x, f)` pairs.
    pub fn tell(&mut self, xs: &[Vec<f64>], fs: &[f64]) {
        assert_eq!(xs.len(), self.lambda);
        assert_eq!(fs.len(), self.lambda);
        let n = self.n;
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
        self.generation += 1;

        let old = self.mean.clone();
        let steps: Vec<DVector<f64>> = order[..self.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&xs[i]) - &old) / self.sigma)
            .collect();
        let mut ystep = DVector::zeros(n);
        for (w, s) in self.weights.iter().zip(&steps) {
            ystep += s * *w;
        }
        self.mean = &old + &ystep * self.sigma;

        // C^{-1/2} y = B D^{-1} Bᵀ y
        let inv_sqrt_y = &self.basis * (self.basis.tr_mul(&ystep).component_div(&self.scales));
        self.ps = &self.ps * (1.0 - self.cs) + inv_sqrt_y * (self.cs * (2.0 - self.cs) * self.mueff).sqrt();
        let ps_norm = self.ps.norm();
        let denom = (1.0 - (1.0 - self.cs).powi(2 * self.generation as i32)).sqrt();
        let hsig = ps_norm / denom / self.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let hs = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - self.cc) + &ystep * (hs * (self.cc * (2.0 - self.cc) * self.mueff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, s) in self.weights.iter().zip(&steps) {
            rank_mu.ger(*w, s, s, 1.0);
        }
        let delta = (1.0 - hs) * self.cc * (2.0 - self.cc);
        self.cov = &self.cov * (1.0 - self.c1 - self.cmu + self.c1 * delta)
            + (&self.pc * self.pc.transpose()) * self.c1
            + rank_mu * self.cmu;
        self.sigma *= ((self.cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();
        self.decompose();
    }

    fn decompose(&mut self) {
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max();
        let floor = EIGEN_FLOOR * max.max(f64::MIN_POSITIVE);
        let mut vals = eig.eigenvalues.clone();
        if vals.iter().any(|v| *v < floor) {
            self.repairs += 1;
            log::debug!("covariance eigenvalues floored at {floor:e}");
            vals.iter_mut().for_each(|v| *v = v.max(floor));
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        }
        self.basis = eig.eigenvectors;
        self.scales = vals.map(f64::sqrt);
    }

    /// Smallest eigenvalue of the current covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.scales.iter().map(|s| s * s).fold(f64::INFINITY, f64::min)
    }
}

/// Minimizes `f` without bounds for at most `budget` evaluations. Returns
/// the best point and value.
pub fn minimize_unbounded(
    mut f: impl FnMut(&[f64]) -> f64,
    mean: &[f64],
    sigma0: f64,
    lambda: usize,
    budget: usize,
    seed: u64,
) -> (Vec<f64>, f64) {
    let mut es = Cmaes::new(mean, sigma0, lambda);
    let mut rng = seed::rng(seed);
    let mut best = (mean.to_vec(), f64::INFINITY);
    let mut used = 0;
    while used + lambda <= budget {
        let xs: Vec<Vec<f64>> = (0..lambda).map(|_| es.sample(&mut rng)).collect();
        let fs: Vec<f64> = xs.iter().map(|x| f(x)).collect();
        used += lambda;
        for (x, v) in xs.iter().zip(&fs) {
            if *v < best.1 {
                best = (x.clone(), *v);
            }
        }
        es.tell(&xs, &fs);
    }
    (best.0, best.1)
}

fn sample_in_box<R: Rng>(es: &Cmaes, bounds: &Bounds, rng: &mut R) -> Vec<f64> {
    let mut x = es.sample(rng);
    for _ in 0..MAX_RESAMPLES {
        if bounds.contains(&x) {
            return x;
        }
        x = es.sample(rng);
    }
    bounds.clamp(&x)
}

/// CMA-ES on the objective's box: seeded uniform initial mean, out-of-box
/// offspring resampled then clamped, final generation truncated to the
/// budget. No restarts.
pub fn run_cmaes(
    objective: &dyn Objective,
    config: &RunConfig,
    cconfig: &CmaesConfig,
    observer: &mut Observer<'_>,
) -> Result<Archive> {
    cconfig.validate()?;
    let bounds = objective.bounds().clone();
    let mut session = Session::new(objective, config, observer)?;
    let mut rng = seed::rng(seed::derive(config.seed, "cmaes"));
    let mean = crate::doe::uniform(1, &bounds, &mut rng).pop().expect("one point");
    let mut es = Cmaes::new(&mean, cconfig.sigma0, cconfig.population_size);
    while session.remaining() > 0 {
        let count = es.lambda().min(session.remaining());
        let extra = Extra { sigma: Some(es.sigma()), ..Default::default() };
        let mut xs = Vec::with_capacity(count);
        let mut fs = Vec::with_capacity(count);
        for _ in 0..count {
            let x = sample_in_box(&es, &bounds, &mut rng);
            let (x, y) = session.evaluate(&x, (0.0, 0.0), &extra);
            xs.push(x);
            fs.push(y);
        }
        if count == es.lambda() {
            es.tell(&xs, &fs);
        }
    }
    if es.repairs() > 0 {
        log::info!("covariance repaired {} times", es.repairs());
    }
    Ok(session.into_archive())
}
