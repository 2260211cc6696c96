//! Coordinate-based transformer force field for crystalline point defects.
//!
//! Atoms are tokens: each carries its Cartesian position plus nine element
//! descriptors. A transformer encoder maps the token sequence to per-atom
//! force vectors; a separate network maps a structure to a scalar energy.
//!
//! This crate is `no_std` + `alloc`. File formats, checkpoints, logging and
//! the command line live in the `adapt` crate. The `std` feature (default)
//! only turns on runtime CPU feature detection for the matrix kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod energy;
mod error;
pub mod force;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod norm;
pub mod optim;
pub mod oracle;
pub mod periodic;
pub mod relax;
pub mod structure;
pub mod experiments;
pub mod train;

pub use autodiff::{Matrix, ParamId, ParamStore, Precision, Real, Tape, Var};
pub use error::{Error, Result};
pub use periodic::{ElementRecord, PeriodicTable};
pub use structure::{Atom, Structure, TokenMatrix, Vec3};
