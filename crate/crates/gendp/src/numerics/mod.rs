//! Reverse-mode differentiation engine sized for this pipeline.
//!
//! A [`Tape`] records primitive applications in topological order; calling
//! [`Tape::backward`] walks the record in reverse and accumulates
//! chain-rule gradients into a [`GradAccum`] keyed by parameter. All math
//! is 64-bit; checkpoints store 32-bit payloads (see [`checkpoint`]).

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::finite_diff_check;
pub use gru::{gru_cell, GruParams};
pub use tape::{NodeId, Tape};
pub use tensor::{GradAccum, ParamId, ParamSet, Tensor};

use thiserror::Error;

/// Errors raised by the differentiation engine and optimizer.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects a scalar, got shape {shape:?}")]
    NotScalar { op: &'static str, shape: Vec<usize> },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("{what} index {index} out of bounds (size {size})")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
