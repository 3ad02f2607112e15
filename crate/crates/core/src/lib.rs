//! Simulation and analysis of coupled electron-muon spin dynamics under microwave drive.
//!
//! Units at every public boundary: frequencies in MHz (linear), fields in mT, times in ns,
//! relaxation rates in μs⁻¹.

// `!(x > 0.0)` is the NaN-rejecting form used by every argument check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Small dense matrices are indexed by level label throughout.
#![allow(clippy::needless_range_loop)]

pub mod analytic;
pub mod cli;
pub mod config;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fitkit;
pub mod io;
pub mod operators;
pub mod spectra;
pub mod spinsys;

pub use error::{Error, Result};
pub use operators::OperatorMatrix;
pub use spinsys::{SpinSystem, Hyperfine, LevelDiagram, TransitionTable};
