//! Paired significance tests between two models scored on the same references.

use alloc::vec::Vec;

use super::classification::check_lengths;
use crate::error::{CoreError, CoreResult};
use crate::stats::ResamplePlan;

/// Joint correctness counts of models A and B over aligned examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContingencyPair {
    /// Both wrong.
    pub n00: u64,
    /// A wrong, B right.
    pub n01: u64,
    /// A right, B wrong.
    pub n10: u64,
    /// Both right.
    pub n11: u64,
}

impl ContingencyPair {
    pub fn from_predictions<T: PartialEq>(
        predictions_a: &[T],
        predictions_b: &[T],
        references: &[T],
    ) -> CoreResult<Self> {
        check_lengths(references.len(), predictions_a.len())?;
        check_lengths(references.len(), predictions_b.len())?;
        let mut c = ContingencyPair::default();
        for ((a, b), r) in predictions_a.iter().zip(predictions_b).zip(references) {
            match (a == r, b == r) {
                (false, false) => c.n00 += 1,
                (false, true) => c.n01 += 1,
                (true, false) => c.n10 += 1,
                (true, true) => c.n11 += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    pub fn discordant(&self) -> u64 {
        self.n01 + self.n10
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McNemar {
    /// `(n01 − n10)² / (n01 + n10)`, reported for reference; 0 without discordant pairs.
    pub statistic: f64,
    /// Exact two-sided binomial p-value on the discordant pairs.
    pub p_value: f64,
    pub n01: u64,
    pub n10: u64,
}

/// `P[X ≤ k]` for `X ~ Binomial(m, 1/2)`.
pub fn binomial_half_cdf(k: u64, m: u64) -> f64 {
    if k >= m {
        return 1.0;
    }
    if m <= 1000 {
        // pmf recurrence from 0.5^m; 0.5^1000 is still a normal f64.
        let mut term = libm::exp2(-(m as f64));
        let mut sum = term;
        for i in 0..k {
            term = term * (m - i) as f64 / (i + 1) as f64;
            sum += term;
        }
        sum
    } else {
        let ln_half = -core::f64::consts::LN_2 * m as f64;
        let lg_m1 = libm::lgamma(m as f64 + 1.0);
        (0..=k)
            .map(|i| {
                let ln_c = lg_m1 - libm::lgamma(i as f64 + 1.0) - libm::lgamma((m - i) as f64 + 1.0);
                libm::exp(ln_c + ln_half)
            })
            .sum()
    }
}

/// Exact McNemar test from discordant counts.
pub fn mcnemar_from_counts(n01: u64, n10: u64) -> McNemar {
    let m = n01 + n10;
    if m == 0 {
        return McNemar { statistic: 0.0, p_value: 1.0, n01, n10 };
    }
    let diff = n01.abs_diff(n10) as f64;
    let statistic = diff * diff / m as f64;
    let p_value = (2.0 * binomial_half_cdf(n01.min(n10), m)).min(1.0);
    McNemar { statistic, p_value, n01, n10 }
}

pub fn mcnemar<T: PartialEq>(
    predictions_a: &[T],
    predictions_b: &[T],
    references: &[T],
) -> CoreResult<McNemar> {
    let c = ContingencyPair::from_predictions(predictions_a, predictions_b, references)?;
    Ok(mcnemar_from_counts(c.n01, c.n10))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedBootstrap {
    /// `metric(A) − metric(B)` on the full data.
    pub delta: f64,
    pub p_value: f64,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
}

/// Paired bootstrap on a difference statistic.
///
/// `delta` receives row indices and returns `metric(A) − metric(B)` on those
/// rows. The p-value is twice the fraction of resamples whose delta has the
/// opposite sign to the full-data delta or is zero, capped at 1; it is 1 when
/// the full-data delta is itself zero.
pub fn paired_bootstrap<F>(n: usize, iterations: usize, seed: u64, mut delta: F) -> CoreResult<PairedBootstrap>
where
    F: FnMut(&[usize]) -> CoreResult<f64>,
{
    let plan = ResamplePlan::new(n, iterations, seed)?;
    let identity: Vec<usize> = (0..n).collect();
    let full = delta(&identity)?;
    let mut idx = Vec::with_capacity(n);
    let (mut wins_a, mut wins_b, mut ties, mut against) = (0, 0, 0, 0usize);
    for b in 0..iterations {
        plan.indices_into(b, &mut idx)?;
        let d = delta(&idx)?;
        if !d.is_finite() {
            return Err(CoreError::DegenerateMetric { iteration: b });
        }
        if d > 0.0 {
            wins_a += 1;
        } else if d < 0.0 {
            wins_b += 1;
        } else {
            ties += 1;
        }
        if d * full <= 0.0 {
            against += 1;
        }
    }
    let p_value = if full == 0.0 {
        1.0
    } else {
        (2.0 * against as f64 / iterations as f64).min(1.0)
    };
    Ok(PairedBootstrap { delta: full, p_value, wins_a, wins_b, ties })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::classification::accuracy;
    use alloc::vec;

    #[test]
    fn symmetric_discordance() {
        let r = mcnemar_from_counts(5, 5);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn eight_two_split() {
        let r = mcnemar_from_counts(8, 2);
        assert!((r.p_value - 0.109375).abs() < 1e-15);
        assert_eq!(r.statistic, 3.6);
    }

    #[test]
    fn no_disagreement() {
        let preds = [1, 0, 1, 1];
        let r = mcnemar(&preds, &preds, &[1, 1, 0, 1]).unwrap();
        assert_eq!((r.p_value, r.statistic, r.n01, r.n10), (1.0, 0.0, 0, 0));
    }

    #[test]
    fn contingency_counts() {
        let c = ContingencyPair::from_predictions(&[1, 0, 1, 0], &[1, 1, 0, 0], &[1, 1, 1, 1]).unwrap();
        assert_eq!(c, ContingencyPair { n00: 1, n01: 1, n10: 1, n11: 1 });
        assert_eq!(c.total(), 4);
        assert!(ContingencyPair::from_predictions(&[1], &[1, 2], &[1]).is_err());
    }

    #[test]
    fn large_m_uses_log_space() {
        let p = mcnemar_from_counts(1500, 1500).p_value;
        assert!((p - 1.0).abs() < 1e-9);
        let p = mcnemar_from_counts(600, 900).p_value;
        assert!(p > 0.0 && p < 1e-12);
    }

    fn accuracy_delta<'a>(a: &'a [i64], b: &'a [i64], r: &'a [i64]) -> impl FnMut(&[usize]) -> CoreResult<f64> + 'a {
        move |idx| {
            let pick = |v: &[i64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let rr = pick(r);
            Ok(accuracy(&pick(a), &rr)? - accuracy(&pick(b), &rr)?)
        }
    }

    #[test]
    fn identical_models() {
        let a = vec![1, 0, 1, 1, 0];
        let r = vec![1, 1, 1, 0, 0];
        let out = paired_bootstrap(5, 100, 42, accuracy_delta(&a, &a, &r)).unwrap();
        assert_eq!((out.delta, out.p_value, out.ties), (0.0, 1.0, 100));
    }

    #[test]
    fn dominant_model() {
        let r: Vec<i64> = (0..50).map(|i| i % 2).collect();
        let a = r.clone();
        let b: Vec<i64> = r.iter().map(|x| 1 - x).collect();
        let out = paired_bootstrap(50, 1000, 42, accuracy_delta(&a, &b, &r)).unwrap();
        assert_eq!(out.delta, 1.0);
        assert_eq!(out.p_value, 0.0);
        assert_eq!(out.wins_a, 1000);
    }
}
