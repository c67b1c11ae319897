//! Latency and throughput summaries from per-batch request timings.
//!
//! Each batch's duration is split evenly across its examples. Percentiles use
//! the nearest-rank rule: the value at 1-based rank `⌈p/100 · N⌉` of the
//! ascending per-example latencies.

use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfStats {
    pub total_time_s: f64,
    /// Examples per second.
    pub throughput: f64,
    pub latency_ms: LatencySummary,
    pub n_examples: usize,
    /// Largest batch issued.
    pub batch_size: usize,
}

/// Timing of one request batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchTiming {
    pub batch_size: usize,
    pub duration: Duration,
}

impl BatchTiming {
    pub fn new(batch_size: usize, duration: Duration) -> Self {
        BatchTiming { batch_size, duration }
    }
}

pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = libm::ceil(pct / 100.0 * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn measure_perf(timings: &[BatchTiming]) -> CoreResult<PerfStats> {
    let n_examples: usize = timings.iter().map(|t| t.batch_size).sum();
    if n_examples == 0 {
        return Err(CoreError::EmptyInput);
    }
    let mut latencies = Vec::with_capacity(n_examples);
    let mut total_s = 0.0;
    for t in timings {
        let secs = t.duration.as_secs_f64();
        total_s += secs;
        if t.batch_size > 0 {
            let per_example_ms = secs * 1000.0 / t.batch_size as f64;
            latencies.extend(core::iter::repeat_n(per_example_ms, t.batch_size));
        }
    }
    let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
    latencies.sort_by(f64::total_cmp);
    let throughput = if total_s > 0.0 { n_examples as f64 / total_s } else { 0.0 };
    Ok(PerfStats {
        total_time_s: total_s,
        throughput,
        latency_ms: LatencySummary {
            mean,
            p50: nearest_rank(&latencies, 50.0),
            p90: nearest_rank(&latencies, 90.0),
            p99: nearest_rank(&latencies, 99.0),
            max: latencies[latencies.len() - 1],
        },
        n_examples,
        batch_size: timings.iter().map(|t| t.batch_size).max().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    #[test]
    fn single_example() {
        let p = measure_perf(&[BatchTiming::new(1, ms(10))]).unwrap();
        assert!((p.latency_ms.p50 - 10.0).abs() < 1e-9);
        assert_eq!(p.latency_ms.p50, p.latency_ms.p99);
        assert!((p.throughput - 100.0).abs() < 1e-9);
    }

    #[test]
    fn two_batches() {
        let p = measure_perf(&[BatchTiming::new(1, ms(10)), BatchTiming::new(1, ms(30))]).unwrap();
        assert!((p.latency_ms.mean - 20.0).abs() < 1e-9);
        assert!((p.latency_ms.max - 30.0).abs() < 1e-9);
        assert!((p.latency_ms.p50 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn batch_attribution() {
        let p = measure_perf(&[BatchTiming::new(4, ms(40))]).unwrap();
        assert_eq!(p.n_examples, 4);
        assert!((p.latency_ms.p50 - 10.0).abs() < 1e-9);
        assert!((p.latency_ms.max - 10.0).abs() < 1e-9);
        assert_eq!(p.batch_size, 4);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(measure_perf(&[]), Err(CoreError::EmptyInput));
    }

    #[test]
    fn nearest_rank_rule() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), 5.0);
        assert_eq!(nearest_rank(&v, 90.0), 9.0);
        assert_eq!(nearest_rank(&v, 99.0), 10.0);
    }
}
