//! Expected improvement and its maximization over a box.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::doe;
use crate::error::{Error, Result};
use crate::objective::Bounds;
use crate::optim::{minimize_bounded, LbfgsOptions};
use crate::seed;
use crate::surrogate::GpModel;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Uniform probe points scored before the local runs.
pub const DEFAULT_PROBES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcqKind {
    ExpectedImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqConfig {
    pub kind: AcqKind,
    /// Uniform points scored to seed the local runs.
    pub probes: usize,
    /// Number of local quasi-Newton runs.
    pub restarts: usize,
    /// Iteration cap of each local run.
    pub local_steps_budget: usize,
    pub bounds: Bounds,
}

impl AcqConfig {
    pub fn new(bounds: Bounds) -> Self {
        AcqConfig { kind: AcqKind::ExpectedImprovement, probes: DEFAULT_PROBES, restarts: 5, local_steps_budget: 50, bounds }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probes == 0 {
            return Err(Error::invalid("acquisition probes must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("acquisition restarts must be at least 1"));
        }
        Ok(())
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Closed-form expected improvement below `f_best` (minimization).
pub fn expected_improvement(mean: f64, std: f64, f_best: f64) -> f64 {
    let diff = f_best - mean;
    if !(std > 0.0) {
        return diff.max(0.0);
    }
    let z = diff / std;
    (diff * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

/// The uniform probe points [`maximize_acquisition`] scores for `seed`.
pub fn probe_points(config: &AcqConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed::derive(seed, "acq-probes"));
    doe::uniform(config.probes, &config.bounds, &mut rng)
}

#[derive(Debug, Clone)]
pub struct AcqResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value among the probe points.
    pub best_probe_value: f64,
}

fn ei_many(model: &GpModel, points: &[Vec<f64>], f_best: f64) -> Result<Vec<f64>> {
    Ok(model.predict_many(points)?.into_iter().map(|(m, s)| expected_improvement(m, s, f_best)).collect())
}

/// Maximizes expected improvement over `config.bounds`.
///
/// The `restarts` best probe points seed bounded L-BFGS runs whose gradients
/// come from central differences; the best point seen overall is returned.
pub fn maximize_acquisition(model: &GpModel, f_best: f64, config: &AcqConfig, seed: u64) -> Result<AcqResult> {
    config.validate()?;
    let bounds = &config.bounds;
    let d = bounds.dim();
    if d != model.dim() {
        return Err(Error::invalid(format!("acquisition box has dimension {d}, model has {}", model.dim())));
    }
    let probes = probe_points(config, seed);
    let values = ei_many(model, &probes, f_best)?;

    let mut order: Vec<usize> = (0..probes.len()).collect();
    // random tie order, then stable sort by value
    order.shuffle(&mut seed::rng(seed::derive(seed, "acq-order")));
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let best_probe = order[0];
    let mut best = AcqResult { x: probes[best_probe].clone(), value: values[best_probe], best_probe_value: values[best_probe] };

    let steps: Vec<f64> = (0..d).map(|i| 1e-6 * bounds.width(i)).collect();
    let opts = LbfgsOptions { max_iter: config.local_steps_budget, pg_tol: 1e-10, f_tol: 1e-10, ..Default::default() };
    let lower = bounds.lower();
    let upper = bounds.upper();
    let objective = |x: &[f64], grad: &mut [f64]| -> f64 {
        // centre plus the 2d difference points, in one batched prediction
        let mut pts = Vec::with_capacity(2 * d + 1);
        pts.push(x.to_vec());
        for i in 0..d {
            let mut p = x.to_vec();
            p[i] = (x[i] + steps[i]).min(upper[i]);
            pts.push(p);
            let mut m = x.to_vec();
            m[i] = (x[i] - steps[i]).max(lower[i]);
            pts.push(m);
        }
        let Ok(v) = ei_many(model, &pts, f_best) else {
            return f64::INFINITY;
        };
        for i in 0..d {
            let h = pts[1 + 2 * i][i] - pts[2 + 2 * i][i];
            grad[i] = if h > 0.0 { -(v[1 + 2 * i] - v[2 + 2 * i]) / h } else { 0.0 };
        }
        -v[0]
    };
    for &start in order.iter().take(config.restarts) {
        if values[start] <= 0.0 {
            break;
        }
        let m = minimize_bounded(objective, &probes[start], lower, upper, &opts);
        let value = -m.f;
        if value.is_finite() && value > best.value {
            best.x = bounds.clamp(&m.x);
            best.value = value;
        }
    }
    Ok(best)
}
