//! Fairness-aware stochastic ranking.
//!
//! Rankings are optimized for generalized Gini welfare functions of user
//! utilities and item exposures with Frank-Wolfe over sparse mixtures of
//! top-K assignments. The nonsmooth welfare is handled with a Moreau
//! envelope whose gradient is a permutahedron projection, computed by
//! isotonic regression.

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod isotonic;
pub mod model;
pub mod objectives;
pub mod optimizer;
pub mod reciprocal;
pub mod welfare;

pub use error::{Error, Result};
pub use model::{Assignment, ExposureWeights, PreferenceMatrix, RankingPolicy, UtilityProfile};
pub use optimizer::{ConvergenceTrace, ObjectiveKind, OptimizerConfig, Variant};
pub use welfare::{GgfWeights, WeightScheme};
