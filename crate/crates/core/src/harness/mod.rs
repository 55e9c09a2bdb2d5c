//! File formats, model persistence and Monte Carlo fault sweeps.

pub mod config;
pub mod format;
pub mod model;
pub mod sweep;

pub use model::{Model, ModelLayer};
pub use sweep::{monte_carlo, run_sweep, Method, SimConfig, SweepConfig, SweepRow};
