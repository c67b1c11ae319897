//! Percentile bootstrap confidence intervals.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::resample::ResamplePlan;
use crate::error::{CoreError, CoreResult};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Percentile,
}

/// `low <= high` always holds; the point estimate may fall outside the
/// interval for skewed statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub iterations: usize,
    pub seed: u64,
    pub method: CiMethod,
}

/// Quantile of an ascending slice by linear interpolation between order
/// statistics: `h = (len − 1)·q`, result `x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Statistic values for every resample, in iteration order.
pub fn bootstrap_distribution<F>(plan: &ResamplePlan, mut statistic: F) -> CoreResult<Vec<f64>>
where
    F: FnMut(&[usize]) -> CoreResult<f64>,
{
    let mut idx = Vec::with_capacity(plan.n);
    let mut values = Vec::with_capacity(plan.iterations);
    for b in 0..plan.iterations {
        plan.indices_into(b, &mut idx)?;
        let v = statistic(&idx)?;
        if !v.is_finite() {
            return Err(CoreError::DegenerateMetric { iteration: b });
        }
        values.push(v);
    }
    Ok(values)
}

/// Percentile interval from an already computed resample distribution.
pub fn percentile_interval(
    point: f64,
    mut values: Vec<f64>,
    level: f64,
    plan: &ResamplePlan,
) -> CoreResult<ConfidenceInterval> {
    check_level(level)?;
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        point,
        low: quantile_sorted(&values, alpha),
        high: quantile_sorted(&values, 1.0 - alpha),
        level,
        iterations: plan.iterations,
        seed: plan.seed,
        method: CiMethod::Percentile,
    })
}

fn check_level(level: f64) -> CoreResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CoreError::InvalidParameter {
            name: "level".into(),
            reason: "must lie strictly between 0 and 1".into(),
        })
    }
}

/// Percentile bootstrap CI for `statistic`, which receives row indices (the
/// identity permutation for the point estimate, a resample otherwise).
pub fn bootstrap_ci<F>(
    mut statistic: F,
    n: usize,
    level: f64,
    iterations: usize,
    seed: u64,
) -> CoreResult<ConfidenceInterval>
where
    F: FnMut(&[usize]) -> CoreResult<f64>,
{
    check_level(level)?;
    let plan = ResamplePlan::new(n, iterations, seed)?;
    let identity: Vec<usize> = (0..n).collect();
    let point = statistic(&identity)?;
    let values = bootstrap_distribution(&plan, &mut statistic)?;
    percentile_interval(point, values, level, &plan)
}
