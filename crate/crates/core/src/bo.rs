//! The basic BO loop: initial design, then fit / acquire / evaluate until
//! the budget is spent.

use crate::acquisition::{maximize_acquisition, AcqConfig};
use crate::doe;
use crate::error::{Error, Result};
use crate::objective::{Bounds, Objective};
use crate::run::{Archive, Extra, Observer, RunConfig, Session, DUPLICATE_TOL};
use crate::seed;
use crate::surrogate::{GpConfig, GpModel};
use crate::timing::{time_phase, Phase};

/// Evaluates the Latin-hypercube initial design. Returns the number of
/// points evaluated.
pub(crate) fn evaluate_doe(session: &mut Session<'_, '_>, n0: usize, seed: u64) -> Result<usize> {
    let n = n0.min(session.remaining());
    if n == 0 {
        return Ok(0);
    }
    let bounds = session.objective().bounds().clone();
    let design = doe::latin_hypercube(n, bounds.dim(), &bounds, seed::derive(seed, "doe"))?;
    for p in &design.points {
        session.evaluate(p, (0.0, 0.0), &Extra::default());
    }
    Ok(n)
}

/// Replaces `x` by a uniform point when it duplicates an archived point.
pub(crate) fn dedup_proposal(archive: &Archive, bounds: &Bounds, x: Vec<f64>, rng: &mut seed::Rng) -> (Vec<f64>, bool) {
    if archive.contains_near(&x, DUPLICATE_TOL) {
        (doe::uniform(1, bounds, rng).pop().expect("one point"), true)
    } else {
        (x, false)
    }
}

/// Vanilla BO with a GP on unit-cube-scaled inputs and EI acquisition.
///
/// `acq.bounds` must be the unit cube of the problem's dimension.
pub fn run_vanilla_bo(
    objective: &dyn Objective,
    config: &RunConfig,
    gp: &GpConfig,
    acq: &AcqConfig,
    observer: &mut Observer<'_>,
) -> Result<Archive> {
    let bounds = objective.bounds().clone();
    let d = bounds.dim();
    if acq.bounds != Bounds::unit(d) {
        return Err(Error::invalid("vanilla BO searches the unit cube; acquisition bounds must match"));
    }
    gp.validate()?;
    acq.validate()?;
    let mut session = Session::new(objective, config, observer)?;
    evaluate_doe(&mut session, config.n0, config.seed)?;
    let mut rng = seed::rng(seed::derive(config.seed, "bo-fallback"));
    let mut iter = 0u64;
    while session.remaining() > 0 {
        let archive = session.archive();
        if archive.len() < 2 {
            let p = doe::uniform(1, &bounds, &mut rng).pop().expect("one point");
            session.evaluate(&p, (0.0, 0.0), &Extra::default());
            continue;
        }
        let xu: Vec<Vec<f64>> = archive.x().iter().map(|p| bounds.to_unit(p)).collect();
        let y = archive.y().to_vec();
        let f_best = archive.best_y();
        let (model, fit_s) =
            time_phase(Phase::ModelFit, || GpModel::fit(&xu, &y, gp, seed::derive_indexed(config.seed, "gp", iter)));
        let model = model?;
        let (best, acq_s) = time_phase(Phase::AcqOpt, || {
            maximize_acquisition(&model, f_best, acq, seed::derive_indexed(config.seed, "acq", iter))
        });
        let x = bounds.from_unit(&best?.x);
        let (x, replaced) = dedup_proposal(session.archive(), &bounds, x, &mut rng);
        let extra = Extra { note: replaced.then(|| "duplicate-replaced".to_string()), ..Default::default() };
        session.evaluate(&x, (fit_s, acq_s), &extra);
        iter += 1;
    }
    Ok(session.into_archive())
}
