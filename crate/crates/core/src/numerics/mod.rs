//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod ops;
mod real;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use ops::{concat_channels, conv2d, field_of_view, prelu, slice_channels, ConvGeometry};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
