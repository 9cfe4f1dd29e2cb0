//! Regret accounting, growth-exponent fits and verification oracles.

mod rates;
mod regret;
mod verify;

pub use rates::{
    fit_cumulative, fit_growth_exponent, fit_power_law, geometric_checkpoints, tail_half, RateFit, MIN_FIT_POINTS,
    SPACING_TOLERANCE,
};
pub use regret::{
    benchmark, run_experiment, run_seed, theoretical_exponent, CurveRow, RegretCurve, SeedRun, StepRecord, CI_Z,
    EXCESS_TOLERANCE,
};
pub use verify::{
    sup_deviation, verify_blocking, verify_uniform_deviation, BlockingReport, DeviationOracle, DeviationPoint,
    UniformDeviationReport, MAX_BLOCKS, MAX_BLOCK_SPACING, MAX_BLOCK_STATES, MIN_DEVIATION_TRIALS,
};
