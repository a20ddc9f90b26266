//! Mixture proportion estimation under class-specific conditional
//! independence, with weakly-supervised kernel CI/MCI tests.

pub mod error;
pub mod kernels;
pub mod harness;
pub mod ktest;
pub mod mixture;
pub mod plugin;
pub mod mpe;
pub mod numerics;

pub use error::{Error, Result};
