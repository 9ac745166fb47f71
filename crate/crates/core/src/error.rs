use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("resolution {requested} is below the floor of {floor} nodes")]
    ResolutionTooLow { requested: usize, floor: usize },

    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("potential is not admissible: margin {margin:e} at node {node}")]
    NotAdmissible { margin: f64, node: usize },

    #[error("non-finite value encountered while {0}")]
    NonFinite(&'static str),

    #[error("line search failed at iteration {iteration}: step {step:e} underflowed")]
    LineSearchFailed { iteration: usize, step: f64 },

    #[error("state is not critical: gradient norm {grad_norm:e} exceeds {threshold:e}")]
    NotCritical { grad_norm: f64, threshold: f64 },

    #[error("Ricci potential is not a holomorphy potential: fit residual {residual:e} exceeds {threshold:e}")]
    NotSoliton { residual: f64, threshold: f64 },

    #[error("finite-difference step could not be made admissible (last tried {h:e})")]
    StepTooLarge { h: f64 },

    #[error("discretisation failure: {what} defect {defect:e} exceeds {threshold:e}")]
    Discretization {
        what: &'static str,
        defect: f64,
        threshold: f64,
    },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
