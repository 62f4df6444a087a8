//! Dataset and parameter I/O, synthetic generators and the experiment
//! runners behind the `wgspd` command-line tool.

pub mod config;
pub mod cv;
pub mod error;
pub mod io;
pub mod mle_curve;
pub mod plot_prep;
pub mod series;
pub mod synth;

pub use error::{HarnessError, Result};
