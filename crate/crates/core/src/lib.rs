//! Risk-controlling hyperparameter selection as multiple hypothesis testing.
//!
//! Each candidate configuration is paired with the null hypothesis "this
//! candidate is unreliable" (its risk is at or above a threshold). Evidence
//! against that null is computed from calibration losses, either as a
//! fixed-sample p-value or as a sequential e-process, and a multiple-testing
//! procedure turns the per-candidate evidence into a selected subset that
//! carries a family-wise error rate or false discovery rate guarantee.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, scenario
//! generation and the command line live in the `hypersel` companion crate.
//!
//! Procedures provided:
//!
//! * [`pipeline::learn_then_test`]: Bonferroni or fixed-sequence testing on
//!   Hoeffding (average risk) or binomial (quantile risk) p-values.
//! * [`pareto::pareto_testing`]: split the data, estimate the Pareto front,
//!   order it, and run fixed-sequence testing on the held-out half.
//! * [`reliability::rg_pt`]: build a reliability graph from pairwise priors
//!   and test it with the DAG step-up procedure for FDR control.
//! * [`adaptive`]: sequential acquisition with e-processes and anytime-valid
//!   stopping.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adaptive;
pub mod binomial;
mod error;
pub mod evidence;
pub mod graph;
pub mod mht;
pub mod pareto;
pub mod pipeline;
pub mod reliability;
pub mod risk;
pub mod seed;

pub use error::{Error, Result};
