//! Multi-objective reinforcement learning with constrained Pareto front extension.
//!
//! The toolkit trains a set of policies in two stages. First, a batch of
//! policies is trained in parallel, each maximizing a fixed scalarization of
//! the vector return (`driver::pareto_initialization`). Second, solutions
//! selected by crowd distance are pushed along individual objective
//! directions under return constraints on the remaining objectives
//! (`driver::pareto_extension`), using either a log-barrier update, a
//! trust-region update with an analytic single-constraint dual, or a
//! primal-dual reference solver (`constrained`). The resulting archive is
//! scored with exact hypervolume, expected utility, and sparsity (`pareto`),
//! and verified against exhaustive policy enumeration on small environments
//! (`oracle`).

pub mod constrained;
pub mod driver;
pub mod env;
pub mod error;
pub mod oracle;
pub mod parallel;
pub mod pareto;
pub mod policy;
pub mod seeding;
pub mod types;

pub mod cli;

pub use error::{Error, Result};
