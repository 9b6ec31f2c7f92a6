//! Contest-theoretic model of sabotage and self-promotion in peer-rated
//! crowdsourcing contests, with the tooling to test its empirical footprint.
//!
//! * [`contest`] and [`rating_matrix`]: values, Tullock payoffs, gains and
//!   transition thresholds of the high/low/outsider contest.
//! * [`equilibrium`]: the seven symmetric equilibria, their cost regions,
//!   brute-force Nash verification and cost sweeps.
//! * [`sim`]: seeded multi-week rating panels with ground-truth intent.
//! * [`econometrics`]: two-way fixed-effects linear probability models
//!   with cluster-robust errors, DiD and placebo designs.
//! * [`ranking`]: winner changes after removing strategic ratings versus a
//!   bootstrap null.
//!
//! The contest model and solver are generic over [`Scalar`]: `f64`, `f32`
//! and exact rationals.

pub mod contest;
pub mod econometrics;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod linalg;
pub mod ranking;
pub mod rating_matrix;
pub mod scalar;
pub mod sim;

pub use error::{EstimationError, FormatError, ModelError, RankingError, SimError};
pub use scalar::Scalar;

/// Exact rational scalar used for tie-free equilibrium checks.
pub type Rational = num_rational::Ratio<i128>;

pub type ContestConfigF64 = contest::ContestConfig<f64>;
pub type ContestConfigExact = contest::ContestConfig<Rational>;
pub type AgentValuesF64 = contest::AgentValues<f64>;
pub type BoundSetF64 = contest::BoundSet<f64>;
pub type ClassificationF64 = equilibrium::Classification<f64>;
pub type ClassificationExact = equilibrium::Classification<Rational>;
pub type SweepResultF64 = equilibrium::SweepResult<f64>;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
