//! Seeded resampling and bootstrap confidence intervals.

mod bootstrap;
mod resample;

pub use bootstrap::{
    bootstrap_ci, bootstrap_distribution, percentile_interval, quantile_sorted, CiMethod,
    ConfidenceInterval, DEFAULT_LEVEL,
};
pub use resample::{mix, ResamplePlan, DEFAULT_ITERATIONS, GAMMA};
