//! Algorithmic core for universal graph prompt tuning with a reinforcement
//! learning prompt editor.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command line live in the `leap` companion crate.
#![no_std]
// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod prompt;
pub mod rl;
pub mod tensor;
pub mod theorem;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
