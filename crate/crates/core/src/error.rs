use thiserror::Error;

use crate::network::OdPair;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown edge `{0}`")]
    UnknownEdge(String),

    #[error("no path from {} to {}", .0.origin, .0.destination)]
    NoPath(OdPair),

    #[error("OD pair {} has demand but no enumerated paths", .0)]
    UnreachableDemand(OdPair),

    #[error("flow must be nonnegative, got {0}")]
    NegativeFlow(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("choice set is empty")]
    EmptyChoiceSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error(
        "target level {gamma} exceeds the total true demand {total_demand}; \
         true-user flow on any edge is bounded by the total true demand"
    )]
    GammaInfeasible { gamma: f64, total_demand: f64 },

    #[error("attack candidate OD set is empty")]
    EmptyCandidates,

    #[error("no feasible attack plan found: {0}")]
    AttackInfeasible(String),

    #[error("networks differ in topology: {0}")]
    TopologyMismatch(String),

    #[error("unknown builtin scenario `{0}`")]
    UnknownScenario(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for outcomes that are infeasibility of the requested problem rather than bad input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::GammaInfeasible { .. }
                | Error::AttackInfeasible(_)
                | Error::NonConvergence { .. }
                | Error::UnreachableDemand(_)
                | Error::NoPath(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
