//! Markov-chain patrolling strategies on weighted digraphs.
//!
//! Hitting and meeting times, entropy rate and return-time entropy, strategy
//! synthesis over chains with a prescribed visit frequency, and a seeded
//! Monte Carlo simulator.

pub mod chain;
pub mod entropy;
pub mod error;
pub mod figures;
pub mod graph;
pub mod hitting;
pub mod optimize;
pub mod par;
pub mod returntime;
pub mod sim;

pub use chain::{StrategyMatrix, ValidationReport};
pub use error::{PatrolError, Result};
pub use graph::{SurveillanceGraph, VisitDistribution};
pub use optimize::{FeasibleSpec, OptimizeResult, PgdOptions};
