pub mod acquisition;
pub mod analysis;
pub mod bo;
pub mod cmaes;
pub mod doe;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod optim;
pub mod registry;
pub mod run;
pub mod seed;
pub mod surrogate;
pub mod testbed;
pub mod timing;
pub mod turbo;

pub use error::{Error, Result};
pub use objective::{Bounds, Objective};
pub use run::{Archive, EvalRecord, Extra, RunConfig};
pub use testbed::{make_problem, Group, Problem};
