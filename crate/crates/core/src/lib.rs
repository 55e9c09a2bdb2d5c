//! Fault-tolerant inference on simulated ReRAM crossbars.
//!
//! The pipeline prunes a small classifier by columns, quantizes each layer
//! into sign-split bit planes, maps the planes onto crossbar arrays with
//! stuck-at faults, duplicates the MSB plane for median voting, and stores
//! the duplicates in the columns freed by pruning.

pub mod data;
pub mod embed;
pub mod error;
pub mod ftol;
pub mod harness;
pub mod matrix;
pub mod prune;
pub mod quant;
pub mod xbar;

pub use error::{Error, Result};
pub use ftol::Activation;
pub use matrix::{BitMatrix, Matrix};
