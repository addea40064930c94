use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("graph contains a cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` declared twice")]
    DuplicateNode(String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("weights of node `{node}` do not match its parent set")]
    WeightKeyMismatch { node: String },
    #[error("invalid mechanism for node `{node}`: {reason}")]
    InvalidMechanism { node: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("ill-conditioned matrix: smallest eigenvalue {min:e} below floor {floor:e}; increase ridge regularization")]
    IllConditioned { min: f64, floor: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("columns are not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("truth has zero variance")]
    DegenerateTruth,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_)
                | Error::IllConditioned { .. }
                | Error::SingularSystem
                | Error::NonFinite(_)
                | Error::Diverged(_)
                | Error::NotSymmetric(_)
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
