//! Dense-matrix math with reverse-mode automatic differentiation and Adam.

mod matrix;
mod optim;
mod tape;

pub use matrix::{l2_distance, Matrix};
pub use optim::AdamState;
pub use tape::{Gradients, Tape, VarId};

#[derive(Debug, thiserror::Error)]
pub enum NumericError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("segment id {id} out of range for {n} segments")]
    SegmentOutOfRange { id: usize, n: usize },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("loss must be scalar, got a {0}x{1} matrix")]
    NonScalarLoss(usize, usize),
}
