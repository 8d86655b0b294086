//! Minimal dense-tensor engine with tape-based reverse-mode differentiation.
//!
//! Values are row-major matrices ([`Tensor`]). A [`Tape`] records every
//! operation applied during a forward pass; [`Tape::backward`] walks the
//! recording in reverse and accumulates gradients for every parameter in the
//! borrowed [`ParamStore`].
//!
//! The engine is generic over the scalar type so that training can run in
//! `f32` while gradient checks exercise the identical code paths in `f64`.
//!
//! Broadcasting is limited to adding a `1×n` bias row; every other binary op
//! requires identical shapes.

mod error;
pub mod gradcheck;
mod kernels;
mod ops;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckConfig, GradCheckReport};
pub use params::{Gradients, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::{Shape, Tensor};
