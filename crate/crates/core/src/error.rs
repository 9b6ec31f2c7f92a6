use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid contest config: {0}")]
    InvalidConfig(String),
    #[error("invalid strategy profile: {0}")]
    InvalidProfile(String),
    #[error("contest has zero total value")]
    DegenerateContest,
    #[error(
        "performance gap g = {gap:.6} < 1: high types can be overtaken through strategic behaviour, \
         low types may gain less from self-promotion than high types and the seven-state taxonomy does not apply"
    )]
    GapViolated { gap: f64 },
    #[error("sabotage count {requested} exceeds the {max} feasible targets")]
    InvalidCount { requested: usize, max: usize },
    #[error("transition thresholds out of order ({0}); the seven-state sequence does not hold for this config")]
    BoundOrder(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("invalid regression spec: {0}")]
    InvalidSpec(String),
    #[error("no usable observations")]
    EmptyPanel,
    #[error("need at least two clusters, found {0}")]
    TooFewClusters(usize),
    #[error("demeaning did not converge after {iterations} sweeps (max change {delta:e})")]
    NonConvergence { iterations: usize, delta: f64 },
    #[error("no identified regressors remain after dropping collinear terms")]
    NothingIdentified,
    #[error("window [{start}, {end}] does not straddle the regime switch at week {switch}")]
    InvalidWindow { start: u32, end: u32, switch: u32 },
    #[error("panel contains no incentive change")]
    NoIncentiveChange,
}

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("contest week {0} has no ratings after exclusion")]
    EmptyWeek(u32),
    #[error("bootstrap needs at least 100 replications, got {0}")]
    TooFewReplications(usize),
    #[error("panel has no contest weeks")]
    EmptyPanel,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{what} schema mismatch: expected {expected}, found {found}")]
    Schema { what: &'static str, expected: String, found: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}
