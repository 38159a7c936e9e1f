//! Dense tensors, a reverse-mode tape, and the neural building blocks
//! shared by the encoder and both decoders.

mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use graph::{Graph, Var};
pub use layers::{dropout, BiLstm, CharCnn, Linear, LstmCell, PAD_CHAR, UNKNOWN_CHAR};
pub use optim::AdamState;
pub use params::{Gradients, ParameterStore};
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty support: every softmax position is masked")]
    EmptySupport,
    #[error("empty sequence")]
    EmptySequence,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("dropout rate must be in [0, 1), got {0}")]
    InvalidDropout(f64),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
}

/// Masked softmax over a standalone probability vector.
///
/// Convenience wrapper for callers outside a graph.
pub fn softmax_masked<T: Real>(logits: &Tensor<T>, keep: &[bool]) -> Result<Tensor<T>, NdError> {
    let mut g = Graph::detached();
    let x = g.constant(logits.clone());
    let p = g.softmax(x, Some(keep))?;
    Ok(g.value(p).clone())
}

#[cfg(test)]
mod tests;
