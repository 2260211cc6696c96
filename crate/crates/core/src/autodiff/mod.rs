//! Dense-matrix reverse-mode differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass (define-by-run): each
//! operation evaluates eagerly, stores its result, and records enough to run
//! its vector-Jacobian product later. [`Tape::backward`] walks the records in
//! reverse and accumulates gradients into the [`ParamStore`] slots of every
//! parameter leaf that the loss depends on.

pub mod check;
mod matrix;
mod params;
mod real;
mod tape;

pub use matrix::Matrix;
pub use params::{ParamId, ParamStore};
pub use real::{Precision, Real};
pub use tape::{Gradients, Tape, Var};
