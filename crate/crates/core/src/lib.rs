//! Coupling by change of measure for functional SDEs driven by subordinate
//! Brownian motion, with Monte Carlo checks of the resulting Harnack,
//! entropy and total-variation bounds.

pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod model;
pub mod payoff;
pub mod rng;
pub mod segment;
pub mod solver;
pub mod stats;
pub mod subordinator;

pub use error::{Error, Result};
pub use model::{make_model, ModelDescriptor, ModelSpec};
pub use rng::SeedStream;
pub use segment::{Interpolation, Segment, Trajectory};
pub use stats::{Estimate, NestedEstimate};
pub use subordinator::{sample_path, BernsteinSpec, Clock, LevyMeasure, RegularizedPath, SubordinatorPath};
pub use payoff::{BuiltinPayoff, Payoff};
pub use solver::{inner_mc, semigroup_estimate, solve_path, SolverConfig, TimeGrid};
pub use coupling::{run_coupling, run_couplings, CouplingRecord, CouplingSummary};
pub use harness::{McParams, VerificationReport};
