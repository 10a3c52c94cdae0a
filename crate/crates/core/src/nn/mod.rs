//! Dense tensors, reverse-mode differentiation and the layer set used by the
//! dereverberation models.

mod adam;
mod conv;
mod gradcheck;
mod gru;
mod linalg;
mod ops;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use conv::Padding;
pub use gradcheck::{
    grad_check, relative_error, relative_error_with_floor, GradCheckReport, DEFAULT_EPS, LOSS_RELATIVE_FLOOR,
};
pub use gru::GruParams;
pub use params::{Bound, Init, ParamSpec, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),
}
