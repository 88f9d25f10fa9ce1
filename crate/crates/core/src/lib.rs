//! Numerical laboratory for single-shot quantum state learning.
//!
//! A hardware-efficient ansatz is trained by an evolution strategy whose
//! hyperparameters (sampling range and learning rate) are steered by an
//! actor-critic agent. Supporting modules provide the measurement
//! environment, a maximum-likelihood tomography baseline, scaling-law
//! fits, and reproducible seeding.

pub mod agent;
pub mod analysis;
pub mod es;
pub mod measure;
pub mod metatrain;
pub mod qsim;
pub mod qst;
pub mod seed;

use thiserror::Error;

/// Errors shared across the crate's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid basis index {index} for {n_qubits} qubits")]
    InvalidBasisIndex { index: usize, n_qubits: usize },
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
