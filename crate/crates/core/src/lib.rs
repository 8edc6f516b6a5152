//! Belief propagation under convex free energies for discrete factor graphs.
//!
//! Counting numbers that admit a nonnegative entropy decomposition make the
//! approximate free energy convex. With them, max-product fixed points yield
//! certified MAP assignments (see [`extract`]), and sum-product annealed
//! toward zero temperature solves the MAP LP relaxation (see [`anneal`]).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, with `F32*` variants for single precision.

pub mod anneal;
pub mod beliefs;
pub mod counting;
pub mod engine;
pub mod extract;
mod flow;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod scalar;

pub use anneal::{classify_regime, lp_bound_check, solve_lp, AnnealError, AnnealSchedule, LpSolution, Regime};
pub use beliefs::{BeliefError, BeliefSet};
pub use counting::{
    bethe, certify_convexity, default_convex, trbp_from_edge_probs, trivial_convex, ConvexityCertificate, CountingError,
    CountingNumbers, NotCertified, Preset,
};
pub use engine::{run, run_ordinary_bp, EngineError, InferenceConfig, MessageState, Schedule, Semiring};
pub use extract::{detect_ties, extract, ExtractConfig, ExtractError, ExtractInput, MapCertificate, TiePartition, Tier};
pub use harness::HarnessError;
pub use model::{build_graph, Assignment, FactorDef, FactorGraph, ModelError, VariableDef};
pub use oracle::{OracleBudget, OracleError};
pub use scalar::Scalar;

use thiserror::Error;

/// Any error the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Beliefs(#[from] BeliefError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Anneal(#[from] AnnealError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

pub type Graph = FactorGraph<f64>;
pub type Counts = CountingNumbers<f64>;
pub type Certificate = ConvexityCertificate<f64>;
pub type Beliefs = BeliefSet<f64>;
pub type Messages = MessageState<f64>;
pub type Config = InferenceConfig<f64>;
pub type Schedule64 = AnnealSchedule<f64>;
pub type Map = MapCertificate<f64>;

pub type F32Graph = FactorGraph<f32>;
pub type F32Counts = CountingNumbers<f32>;
pub type F32Beliefs = BeliefSet<f32>;
pub type F32Config = InferenceConfig<f32>;
