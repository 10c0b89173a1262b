//! File formats, synthetic scenarios, Monte Carlo validation and the
//! `hypersel` command line on top of `hypersel-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod registry;
pub mod report;
pub mod run;
pub mod scenario;
pub mod validate;

pub use hypersel_core as core;
