use thiserror::Error;

use crate::network::HLConcParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown activation `{0}` (expected tanh|sine|gaussian|swish|softplus)")]
    UnknownActivation(String),
    #[error("unknown problem `{0}` (expected heat|burgers|wave|kleingordon)")]
    UnknownProblem(String),
    #[error("unknown marching mode `{0}` (expected exbtm|btm)")]
    UnknownMode(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("expected {expected} penalty weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("block {needed} is required but has no frozen network")]
    MissingFrozenBlock { needed: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Non-finite value found while evaluating a loss.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite loss: {set} point {index}")]
pub struct NonFiniteError {
    pub set: &'static str,
    pub index: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    NonFinite(#[from] NonFiniteError),
    #[error("training diverged in block {block} (loss {loss:e})")]
    Diverged {
        block: usize,
        loss: f64,
        /// Parameters at the last accepted iterate with a finite, bounded loss.
        last_good: Box<HLConcParams>,
    },
    #[error("exact solution vanishes on the evaluation grid")]
    ZeroDenominator,
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
