use thiserror::Error;

/// Errors raised across graph construction, discretisation and the
/// quasi-unitary measurements.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge {0} is a loop on vertex {1:?}")]
    LoopEdge(usize, String),
    #[error("duplicate edge between {0:?} and {1:?}")]
    DuplicateEdge(String, String),
    #[error("non-positive weight {value} on {what}")]
    NonPositiveWeight { what: String, value: f64 },
    #[error("unknown vertex id {0:?}")]
    UnknownVertex(String),
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid fractal system: {0}")]
    InvalidSystem(String),
    #[error("inconsistent gluing: {0}")]
    InconsistentGluing(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("compatibility violated (worst relative defect {worst:.3e})")]
    CompatibilityViolation { worst: f64 },

    #[error("ratio {0} outside (0, 1)")]
    InvalidRatio(String),
    #[error("bad partition: {0}")]
    BadPartition(String),
    #[error("incompatible weights: nu/mu varies by {spread:.3e}")]
    IncompatibleWeights { spread: f64 },

    #[error("solver failed: {0}")]
    SolverFailure(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("transversal ratio {0} outside the admissible window")]
    OutOfWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;
