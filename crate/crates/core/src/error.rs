use thiserror::Error;

use crate::system::System;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("operation requires a periodic grid")]
    BoundaryUnsupported,
    #[error("negative or non-finite duration {0}")]
    InvalidDuration(f64),
    #[error("state shape mismatch: expected {expected}, found {found}")]
    StateShape { expected: String, found: String },
    #[error("substep count {substeps} exceeds the stiffness cap")]
    StiffnessCap { substeps: u64 },
    #[error("error {error:e} is below the measurable floor")]
    OrderUnmeasurable { error: f64 },
    #[error("boundary swap is not supported for {0}")]
    BoundarySwapUnsupported(System),
    #[error("mechanism {mechanism} does not belong to {system}")]
    MechanismMismatch { system: System, mechanism: String },
    #[error("reference solver diverged at t = {time}")]
    ReferenceDiverged { time: f64 },
    #[error("policy produced a non-finite output")]
    PolicyNumerical,
    #[error("parameter vector length {found} does not match architecture ({expected})")]
    ParamShape { expected: usize, found: usize },
    #[error("program execution diverged at step {step}")]
    ExecutionDiverged { step: usize },
    #[error("reference field has zero norm; relative error undefined")]
    ZeroReference,
    #[error("metric not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("trajectory too short after transient removal")]
    InsufficientTrajectory,
    #[error("unknown initial-condition family `{0}`")]
    UnknownIcFamily(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
