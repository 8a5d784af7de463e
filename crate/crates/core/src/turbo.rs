//! Trust-region BO with one (TuRBO-1) or several (TuRBO-m) regions.
//!
//! Everything inside works in the unit cube; the objective sees points
//! mapped back to its own box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doe;
use crate::error::{Error, Result};
use crate::objective::{Bounds, Objective};
use crate::run::{Archive, Extra, Observer, RunConfig, Session};
use crate::seed;
use crate::surrogate::{GpConfig, GpModel};
use crate::timing::{time_phase, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurboConfig {
    pub tr_count: usize,
    pub batch_size: usize,
    /// Iteration cap of each GP hyperparameter fit.
    pub n_training_steps: usize,
    pub n_cand: usize,
    pub succtol: usize,
    pub failtol: usize,
    pub length_init: f64,
    pub length_min: f64,
    pub length_max: f64,
    /// Recorded only; archives at these budgets never reach it.
    pub max_cholesky_size: usize,
}

impl TurboConfig {
    fn base(dim: usize) -> Self {
        TurboConfig {
            tr_count: 1,
            batch_size: 5,
            n_training_steps: 50,
            n_cand: (100 * dim).min(5000),
            succtol: 3,
            failtol: 1,
            length_init: 0.8,
            length_min: 0.5f64.powi(7),
            length_max: 1.6,
            max_cholesky_size: 2000,
        }
    }

    /// One trust region; `failtol = ceil(max(4 / batch, dim / batch))`.
    pub fn turbo1(dim: usize) -> Self {
        let mut c = Self::base(dim);
        let bs = c.batch_size as f64;
        c.failtol = (4.0 / bs).max(dim as f64 / bs).ceil() as usize;
        c
    }

    /// `⌊dim / 5⌋` trust regions (at least one); `failtol = max(5, dim)`.
    pub fn turbom(dim: usize) -> Self {
        let mut c = Self::base(dim);
        c.tr_count = (dim / 5).max(1);
        c.failtol = dim.max(5);
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.tr_count == 0 || self.batch_size == 0 || self.n_cand == 0 {
            return Err(Error::invalid("tr_count, batch_size and n_cand must be positive"));
        }
        if self.succtol == 0 || self.failtol == 0 {
            return Err(Error::invalid("succtol and failtol must be at least 1"));
        }
        if !(0.0 < self.length_min && self.length_min < self.length_init && self.length_init <= self.length_max) {
            return Err(Error::invalid("need 0 < length_min < length_init <= length_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub length: f64,
    pub success_count: usize,
    pub failure_count: usize,
    /// Evaluations made for this region since its last restart, in unit
    /// cube coordinates.
    pub local: Archive,
    pub restart_pending: bool,
}

impl TrustRegionState {
    pub fn new(config: &TurboConfig) -> Self {
        TrustRegionState {
            length: config.length_init,
            success_count: 0,
            failure_count: 0,
            local: Archive::new(),
            restart_pending: false,
        }
    }

    /// Incumbent of the local archive.
    pub fn center(&self) -> Option<&[f64]> {
        self.local.best_x()
    }
}

/// One success/failure step of the side-length schedule.
pub fn update_state(state: &TrustRegionState, improved: bool, config: &TurboConfig) -> TrustRegionState {
    let mut s = state.clone();
    if improved {
        s.success_count += 1;
        s.failure_count = 0;
        if s.success_count >= config.succtol {
            s.length = (2.0 * s.length).min(config.length_max);
            s.success_count = 0;
        }
    } else {
        s.failure_count += 1;
        s.success_count = 0;
        if s.failure_count >= config.failtol {
            s.length /= 2.0;
            s.failure_count = 0;
        }
    }
    if s.length < config.length_min {
        s.restart_pending = true;
    }
    s
}

/// `(lower, upper)` of the trust region: half-widths
/// `(length / 2) · l_i / geomean(l)`, clipped to the unit cube.
pub fn trust_region_box(center: &[f64], length: f64, lengthscales: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = center.len();
    let log_mean = lengthscales.iter().map(|l| l.ln()).sum::<f64>() / d as f64;
    let geo = log_mean.exp();
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for i in 0..d {
        let half = 0.5 * length * lengthscales[i] / geo;
        lo.push((center[i] - half).clamp(0.0, 1.0));
        hi.push((center[i] + half).clamp(0.0, 1.0));
    }
    (lo, hi)
}

/// Candidate points of a region: each perturbs a random subset of the
/// centre's coordinates (each with probability `min(20 / dim, 1)`, at least
/// one) to scrambled-Sobol positions inside the trust region.
pub fn generate_candidates(state: &TrustRegionState, model: &GpModel, config: &TurboConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    let center = state.center().ok_or_else(|| Error::invalid("trust region has no evaluated points"))?;
    let d = center.len();
    if model.dim() != d {
        return Err(Error::invalid("model dimension does not match the trust region"));
    }
    let (lo, hi) = trust_region_box(center, state.length, &model.lengthscales_per_dim());
    let sobol = doe::low_discrepancy_sequence(config.n_cand, d, seed::derive(seed, "sobol"));
    let p = (20.0 / d as f64).min(1.0);
    let mut rng = seed::rng(seed::derive(seed, "mask"));
    Ok(sobol
        .into_iter()
        .map(|u| {
            let mut mask: Vec<bool> = (0..d).map(|_| rng.random_bool(p)).collect();
            if !mask.iter().any(|m| *m) {
                mask[rng.random_range(0..d)] = true;
            }
            (0..d).map(|i| if mask[i] { lo[i] + (hi[i] - lo[i]) * u[i] } else { center[i] }).collect()
        })
        .collect())
}

/// A region's model together with its candidate pool.
pub struct RegionPool<'a> {
    pub model: &'a GpModel,
    pub candidates: Vec<Vec<f64>>,
}

/// Batch selection by Thompson sampling: for every batch slot each region
/// draws one joint posterior sample over its pool, and the globally smallest
/// sampled value wins. Chosen candidates leave their pool.
pub fn thompson_select(regions: &[RegionPool<'_>], batch_size: usize, seed: u64) -> Result<Vec<(usize, Vec<f64>)>> {
    if regions.is_empty() {
        return Err(Error::invalid("thompson selection needs at least one region"));
    }
    let mut samples = Vec::with_capacity(regions.len());
    for (r, region) in regions.iter().enumerate() {
        if region.candidates.is_empty() {
            samples.push(Vec::new());
            continue;
        }
        samples.push(region.model.sample_posterior(&region.candidates, batch_size, seed::derive_indexed(seed, "ts", r as u64))?);
    }
    let mut taken: Vec<Vec<bool>> = regions.iter().map(|r| vec![false; r.candidates.len()]).collect();
    let mut out = Vec::with_capacity(batch_size);
    for slot in 0..batch_size {
        let mut best: Option<(f64, usize, usize)> = None;
        for (r, s) in samples.iter().enumerate() {
            let Some(draw) = s.get(slot) else { continue };
            for (c, &v) in draw.iter().enumerate() {
                if !taken[r][c] && best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, r, c));
                }
            }
        }
        let Some((_, r, c)) = best else { break };
        taken[r][c] = true;
        out.push((r, regions[r].candidates[c].clone()));
    }
    Ok(out)
}

/// Evaluates a fresh Latin-hypercube design for `region`, truncated to the
/// remaining budget.
fn seed_region(
    session: &mut Session<'_, '_>,
    bounds: &Bounds,
    state: &mut TrustRegionState,
    region: usize,
    n: usize,
    seed: u64,
    restart: bool,
) -> Result<()> {
    let n = n.min(session.remaining());
    if n == 0 {
        return Ok(());
    }
    let design = doe::latin_hypercube(n, bounds.dim(), &Bounds::unit(bounds.dim()), seed)?;
    let note = restart.then(|| "restart".to_string());
    let extra = Extra { region: Some(region), note, ..Default::default() };
    for u in &design.points {
        let (x, y) = session.evaluate(&bounds.from_unit(u), (0.0, 0.0), &extra);
        state.local.push(bounds.to_unit(&x), y);
    }
    Ok(())
}

/// TuRBO-1 / TuRBO-m. Regions share the evaluation budget.
pub fn run_turbo(
    objective: &dyn Objective,
    config: &RunConfig,
    tconfig: &TurboConfig,
    gp: &GpConfig,
    observer: &mut Observer<'_>,
) -> Result<Archive> {
    tconfig.validate()?;
    gp.validate()?;
    let gp = GpConfig { max_fit_iters: tconfig.n_training_steps, ..gp.clone() };
    let bounds = objective.bounds().clone();
    let tr = tconfig.tr_count;
    let mut session = Session::new(objective, config, observer)?;

    let min_doe = 2 * tconfig.batch_size;
    let mut states: Vec<TrustRegionState> = (0..tr).map(|_| TrustRegionState::new(tconfig)).collect();
    let mut restarts = vec![0u64; tr];
    for (r, state) in states.iter_mut().enumerate() {
        let share = config.n0 / tr + usize::from(r < config.n0 % tr);
        let s = seed::derive_indexed(config.seed, "region-doe", r as u64);
        seed_region(&mut session, &bounds, state, r, share.max(min_doe), s, false)?;
    }
    let restart_size = min_doe.max(config.n0.div_ceil(tr));

    let mut models: Vec<Option<GpModel>> = vec![None; tr];
    let mut stale = vec![true; tr];
    let mut fallback = seed::rng(seed::derive(config.seed, "turbo-fallback"));
    let mut iter = 0u64;
    while session.remaining() > 0 {
        let fit_all = || -> Result<()> {
            for r in 0..tr {
                if stale[r] && states[r].local.len() >= 2 {
                    let s = seed::derive_indexed(seed::derive_indexed(config.seed, "gp", iter), "region", r as u64);
                    models[r] = Some(GpModel::fit(states[r].local.x(), states[r].local.y(), &gp, s)?);
                    stale[r] = false;
                }
            }
            Ok(())
        };
        let (fitted, fit_s) = time_phase(Phase::ModelFit, fit_all);
        fitted?;

        let active: Vec<usize> = (0..tr).filter(|&r| models[r].is_some() && !stale[r]).collect();
        if active.is_empty() {
            let p = doe::uniform(1, &bounds, &mut fallback).pop().expect("one point");
            session.evaluate(&p, (fit_s, 0.0), &Extra::default());
            continue;
        }
        let select = || -> Result<Vec<(usize, Vec<f64>)>> {
            let mut pools = Vec::with_capacity(active.len());
            for &r in &active {
                let model = models[r].as_ref().expect("active region has a model");
                let s = seed::derive_indexed(seed::derive_indexed(config.seed, "cand", iter), "region", r as u64);
                pools.push(RegionPool { model, candidates: generate_candidates(&states[r], model, tconfig, s)? });
            }
            let batch = tconfig.batch_size.min(session.remaining());
            let picked = thompson_select(&pools, batch, seed::derive_indexed(config.seed, "thompson", iter))?;
            Ok(picked.into_iter().map(|(i, u)| (active[i], u)).collect())
        };
        let (picked, acq_s) = time_phase(Phase::AcqOpt, select);
        let picked = picked?;

        let mut batch_min: Vec<Option<f64>> = vec![None; tr];
        let mut new_points: Vec<Vec<(Vec<f64>, f64)>> = vec![Vec::new(); tr];
        for (j, (r, u)) in picked.into_iter().enumerate() {
            let times = if j == 0 { (fit_s, acq_s) } else { (0.0, 0.0) };
            let extra = Extra { region: Some(r), ..Default::default() };
            let (x, y) = session.evaluate(&bounds.from_unit(&u), times, &extra);
            batch_min[r] = Some(batch_min[r].map_or(y, |m: f64| m.min(y)));
            new_points[r].push((bounds.to_unit(&x), y));
        }
        for r in 0..tr {
            let Some(m) = batch_min[r] else { continue };
            let incumbent = states[r].local.best_y();
            let improved = m < incumbent - 1e-3 * incumbent.abs();
            states[r] = update_state(&states[r], improved, tconfig);
            for (u, y) in new_points[r].drain(..) {
                states[r].local.push(u, y);
            }
            stale[r] = true;
            if states[r].restart_pending {
                restarts[r] += 1;
                states[r] = TrustRegionState::new(tconfig);
                models[r] = None;
                let s = seed::derive_indexed(seed::derive_indexed(config.seed, "restart", r as u64), "n", restarts[r]);
                seed_region(&mut session, &bounds, &mut states[r], r, restart_size, s, true)?;
            }
        }
        iter += 1;
    }
    Ok(session.into_archive())
}
