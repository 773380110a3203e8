use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A latent coordinate became non-finite or left the `|z| <= 1e6` guard.
    #[error("latent inference diverged for sample {sample} at step {step}")]
    Divergence { sample: usize, step: usize },

    #[error("training diverged in epoch {epoch}, batch {batch}: sample {sample} at inference step {step}")]
    TrainingDivergence {
        epoch: usize,
        batch: usize,
        sample: usize,
        step: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("dataset inconsistency: {0}")]
    Consistency(String),

    #[error("training error: {0}")]
    Training(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic {0:02x?})")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
