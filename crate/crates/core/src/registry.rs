//! Named solvers with their default configurations.

use serde::{Deserialize, Serialize};

use crate::acquisition::AcqConfig;
use crate::bo::run_vanilla_bo;
use crate::cmaes::{run_cmaes, CmaesConfig};
use crate::embedding::{run_embedding_bo, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::objective::{Bounds, Objective};
use crate::run::{Archive, Observer, RunConfig};
use crate::surrogate::GpConfig;
use crate::turbo::{run_turbo, TurboConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    /// Proposes several points per model fit.
    pub batched: bool,
    /// Optimizes in a learned subspace.
    pub embedding: bool,
    /// Reports nonzero model-fit and acquisition times.
    pub surrogate_timed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolverSpec {
    pub name: &'static str,
    pub capabilities: Capabilities,
}

/// A fully specified solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum SolverConfig {
    Bo { gp: GpConfig, acq: AcqConfig },
    Embedding { embedding: EmbeddingConfig, gp: GpConfig, acq: AcqConfig },
    Turbo { turbo: TurboConfig, gp: GpConfig },
    Cmaes(CmaesConfig),
}

const fn caps(batched: bool, embedding: bool, surrogate_timed: bool) -> Capabilities {
    Capabilities { batched, embedding, surrogate_timed }
}

static SOLVERS: [SolverSpec; 6] = [
    SolverSpec { name: "bo", capabilities: caps(false, false, true) },
    SolverSpec { name: "pca-bo", capabilities: caps(false, true, true) },
    SolverSpec { name: "kpca-bo", capabilities: caps(false, true, true) },
    SolverSpec { name: "turbo1", capabilities: caps(true, false, true) },
    SolverSpec { name: "turbom", capabilities: caps(true, false, true) },
    SolverSpec { name: "cmaes", capabilities: caps(false, false, false) },
];

pub fn list_solvers() -> &'static [SolverSpec] {
    &SOLVERS
}

pub fn lookup(name: &str) -> Result<&'static SolverSpec> {
    SOLVERS.iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownSolver {
        name: name.to_string(),
        valid: SOLVERS.iter().map(|s| s.name.to_string()).collect(),
    })
}

/// GP settings for the trust-region solvers: a single restart and
/// lengthscales kept inside the unit cube's scale.
pub fn turbo_gp_config() -> GpConfig {
    GpConfig { lengthscale_bounds: (0.005, 2.0), fit_restarts: 1, ..GpConfig::default() }
}

impl SolverSpec {
    pub fn default_config(&self, dim: usize) -> SolverConfig {
        // embedding solvers replace the acquisition bounds with the reduced box
        let acq = AcqConfig::new(Bounds::unit(dim));
        match self.name {
            "bo" => SolverConfig::Bo { gp: GpConfig::default(), acq },
            "pca-bo" => SolverConfig::Embedding { embedding: EmbeddingConfig::linear(), gp: GpConfig::default(), acq },
            "kpca-bo" => SolverConfig::Embedding { embedding: EmbeddingConfig::kernel(), gp: GpConfig::default(), acq },
            "turbo1" => SolverConfig::Turbo { turbo: TurboConfig::turbo1(dim), gp: turbo_gp_config() },
            "turbom" => SolverConfig::Turbo { turbo: TurboConfig::turbom(dim), gp: turbo_gp_config() },
            "cmaes" => SolverConfig::Cmaes(CmaesConfig::for_dim(dim)),
            other => unreachable!("unregistered solver {other}"),
        }
    }
}

pub fn run_with(
    config: &SolverConfig,
    objective: &dyn Objective,
    run: &RunConfig,
    observer: &mut Observer<'_>,
) -> Result<Archive> {
    match config {
        SolverConfig::Bo { gp, acq } => run_vanilla_bo(objective, run, gp, acq, observer),
        SolverConfig::Embedding { embedding, gp, acq } => {
            run_embedding_bo(objective, run, embedding, gp, acq, observer)
        }
        SolverConfig::Turbo { turbo, gp } => run_turbo(objective, run, turbo, gp, observer),
        SolverConfig::Cmaes(c) => run_cmaes(objective, run, c, observer),
    }
}

/// Runs the named solver with its defaults for the objective's dimension.
pub fn dispatch(
    name: &str,
    objective: &dyn Objective,
    run: &RunConfig,
    observer: &mut Observer<'_>,
) -> Result<Archive> {
    let config = lookup(name)?.default_config(objective.dim());
    run_with(&config, objective, run, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registered_names() {
        let names: Vec<&str> = list_solvers().iter().map(|s| s.name).collect();
        assert_eq!(names, ["bo", "pca-bo", "kpca-bo", "turbo1", "turbom", "cmaes"]);
        assert!(!names.contains(&"saasbo") && !names.contains(&"ebo"));
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn defaults_follow_dimension() {
        match lookup("cmaes").unwrap().default_config(10) {
            SolverConfig::Cmaes(c) => assert_eq!(c.population_size, 10),
            other => panic!("{other:?}"),
        }
        match lookup("turbom").unwrap().default_config(40) {
            SolverConfig::Turbo { turbo, .. } => assert_eq!(turbo.tr_count, 8),
            other => panic!("{other:?}"),
        }
        match lookup("turbo1").unwrap().default_config(40) {
            SolverConfig::Turbo { turbo, .. } => assert_eq!(turbo.tr_count, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_name_lists_valid_ones() {
        let err = lookup("saasbo").unwrap_err();
        assert!(matches!(&err, Error::UnknownSolver { valid, .. } if valid.len() == 6));
        assert!(err.to_string().contains("turbo1"));
    }
}
