//! Stream prediction under drifting, β-mixing processes.
//!
//! The crate provides synthetic processes whose marginal laws, drift
//! magnitudes and mixing coefficients are exactly computable, the windowed
//! ERM learners that predict on them, exact regret accounting, and numerical
//! oracles for the blocking and uniform-deviation inequalities.
//!
//! Module map:
//!
//! - [`distributions`]: observations, marginal families, drift schedules,
//!   total variation and class discrepancy.
//! - [`processes`]: product and Markov-modulated sample paths, exact β-mixing
//!   coefficients.
//! - [`hypotheses`]: threshold and finite function classes with exact ERM and
//!   exact risk.
//! - [`learners`]: subsampled, adaptive-window and constant-window ERM plus
//!   baselines.
//! - [`evaluation`]: regret curves, growth-exponent fits, verification reports.
//! - [`harness`]: configuration, runs, sweeps and result files used by the CLI.

pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod hypotheses;
pub mod learners;
pub mod processes;

pub use error::{Error, Result};
