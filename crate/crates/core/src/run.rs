//! Pieces shared by every solver loop: the run configuration, the archive of
//! evaluated points and the per-evaluation observer contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::Objective;

/// Points closer than this to an archived point count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total number of function evaluations, initial design included.
    pub budget: usize,
    /// Size of the initial design.
    pub n0: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn default_budget(dim: usize) -> usize {
        10 * dim + 50
    }

    /// The default protocol for a `dim`-dimensional problem: budget
    /// `10·dim + 50`, initial design of `dim` points.
    pub fn for_dim(dim: usize, seed: u64) -> Self {
        RunConfig { budget: Self::default_budget(dim), n0: dim, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("budget must be positive"));
        }
        if self.n0 > self.budget {
            return Err(Error::invalid(format!("n0 = {} exceeds the budget {}", self.n0, self.budget)));
        }
        Ok(())
    }
}

/// Solver-specific annotations attached to an evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extra {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub region: Option<usize>,
    /// Retained dimensions of the embedding.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    /// Share of variance the embedding retains.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub explained: Option<f64>,
    /// Step size of the evolution strategy when the point was sampled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// One function evaluation as reported to the observer.
#[derive(Debug, Clone, Copy)]
pub struct EvalRecord<'a> {
    /// 1-based position in the run.
    pub index: usize,
    pub x: &'a [f64],
    pub y: f64,
    pub model_fit_cpu_s: f64,
    pub acq_opt_cpu_s: f64,
    pub extra: &'a Extra,
}

pub type Observer<'a> = dyn FnMut(&EvalRecord<'_>) + 'a;

/// Evaluated points with best-so-far tracking.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    best_index: Option<usize>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        let better = match self.best_index {
            None => true,
            Some(b) => y < self.y[b],
        };
        if better {
            self.best_index = Some(self.y.len());
        }
        self.x.push(x);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn best_index(&self) -> Option<usize> {
        self.best_index
    }

    pub fn best_y(&self) -> f64 {
        self.best_index.map_or(f64::INFINITY, |i| self.y[i])
    }

    pub fn best_x(&self) -> Option<&[f64]> {
        self.best_index.map(|i| self.x[i].as_slice())
    }

    /// Best-so-far value after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.y
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect()
    }

    pub fn contains_near(&self, p: &[f64], tol: f64) -> bool {
        self.x.iter().any(|q| linalg::sq_dist(p, q) <= tol * tol)
    }
}

/// Budget accounting around an objective: clamps queries to the box, feeds
/// the archive and notifies the observer.
pub struct Session<'a, 'o> {
    objective: &'a dyn Objective,
    budget: usize,
    archive: Archive,
    observer: &'a mut Observer<'o>,
}

impl<'a, 'o> Session<'a, 'o> {
    pub fn new(objective: &'a dyn Objective, config: &RunConfig, observer: &'a mut Observer<'o>) -> Result<Self> {
        config.validate()?;
        Ok(Session { objective, budget: config.budget, archive: Archive::new(), observer })
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.archive.len()
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn into_archive(self) -> Archive {
        self.archive
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective
    }

    /// Evaluates the clamped point and returns `(clamped x, y)`.
    ///
    /// # Panics
    ///
    /// Panics when the budget is already spent; loops check `remaining`.
    pub fn evaluate(&mut self, x: &[f64], times: (f64, f64), extra: &Extra) -> (Vec<f64>, f64) {
        assert!(self.remaining() > 0, "evaluation past the budget");
        let x = self.objective.bounds().clamp(x);
        let y = self.objective.evaluate(&x);
        self.archive.push(x.clone(), y);
        let record = EvalRecord {
            index: self.archive.len(),
            x: &x,
            y,
            model_fit_cpu_s: times.0,
            acq_opt_cpu_s: times.1,
            extra,
        };
        (self.observer)(&record);
        (x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_protocol() {
        let c = RunConfig::for_dim(10, 0);
        assert_eq!((c.budget, c.n0), (150, 10));
        assert!(RunConfig { budget: 5, n0: 6, seed: 0 }.validate().is_err());
    }

    #[test]
    fn extra_serializes_only_present_fields() {
        assert_eq!(serde_json::to_string(&Extra::default()).unwrap(), "{}");
        let e = Extra { region: Some(2), ..Default::default() };
        assert_eq!(serde_json::to_string(&e).unwrap(), r#"{"region":2}"#);
    }

    proptest! {
        #[test]
        fn best_tracks_minimum(ys in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
            let mut a = Archive::new();
            for (i, &v) in ys.iter().enumerate() {
                a.push(vec![i as f64], v);
                let min = ys[..=i].iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(a.best_y(), min);
                prop_assert_eq!(a.y()[a.best_index().unwrap()], min);
            }
            let bsf = a.best_so_far();
            prop_assert!(bsf.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
