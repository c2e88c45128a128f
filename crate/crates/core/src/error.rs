use thiserror::Error;

/// Errors surfaced by mesh loading, precompute, and the solvers.
///
/// Every error carries enough context (indices, file names, measured
/// quantities) to be actionable from a CLI message alone.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("mesh: {0}")]
    Mesh(String),

    #[error("io: {path}: {msg}")]
    Io { path: String, msg: String },

    #[error("scene: {0}")]
    Scene(String),

    #[error("partition: {0}")]
    Partition(String),

    #[error("basis: {0}")]
    Basis(String),

    #[error("cubature: {0}")]
    Cubature(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("timestep {step} ({phase}): {msg}")]
    Timestep { step: usize, phase: &'static str, msg: String },
}

impl SimError {
    pub fn mesh(msg: impl Into<String>) -> Self {
        SimError::Mesh(msg.into())
    }
    pub fn io(path: impl Into<String>, msg: impl Into<String>) -> Self {
        SimError::Io { path: path.into(), msg: msg.into() }
    }
    /// Tag an error with the timestep and phase it occurred in.
    pub fn at_step(step: usize, phase: &'static str, msg: impl std::fmt::Display) -> Self {
        SimError::Timestep { step, phase, msg: msg.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
