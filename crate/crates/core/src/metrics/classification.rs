//! Accuracy, precision, recall and F1 over discrete labels.
//!
//! Any ratio whose denominator is zero is reported as 0.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::str::FromStr;

use crate::error::{CoreError, CoreResult};

pub(crate) fn check_lengths(a: usize, b: usize) -> CoreResult<()> {
    if a == 0 || b == 0 {
        return Err(CoreError::EmptyInput);
    }
    if a != b {
        return Err(CoreError::LengthMismatch { expected: a, found: b });
    }
    Ok(())
}

pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Fraction of positions where the prediction equals the reference.
pub fn accuracy<T: PartialEq>(predictions: &[T], references: &[T]) -> CoreResult<f64> {
    check_lengths(predictions.len(), references.len())?;
    let correct = predictions.iter().zip(references).filter(|(p, r)| p == r).count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// One-vs-rest counts for `positive`.
    pub fn for_label<T: PartialEq>(predictions: &[T], references: &[T], positive: &T) -> Self {
        let mut c = ConfusionCounts::default();
        for (p, r) in predictions.iter().zip(references) {
            match (p == positive, r == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fp) as f64)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    /// `2·TP / (2·TP + FP + FN)`, equal to the harmonic mean of precision and recall.
    pub fn f1(&self) -> f64 {
        ratio(2.0 * self.tp as f64, (2 * self.tp + self.fp + self.fn_) as f64)
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

/// Multiclass confusion table: `counts[i][j]` counts rows with reference
/// `labels[i]` and prediction `labels[j]`. Labels are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionTable<T> {
    pub labels: Vec<T>,
    pub counts: Vec<Vec<u64>>,
}

impl<T: Ord + Clone> ConfusionTable<T> {
    pub fn new(predictions: &[T], references: &[T]) -> CoreResult<Self> {
        check_lengths(predictions.len(), references.len())?;
        let mut labels: Vec<T> = predictions.iter().chain(references).cloned().collect();
        labels.sort();
        labels.dedup();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (p, r) in predictions.iter().zip(references) {
            let i = labels.binary_search(r).unwrap_or_else(|_| unreachable!());
            let j = labels.binary_search(p).unwrap_or_else(|_| unreachable!());
            counts[i][j] += 1;
        }
        Ok(ConfusionTable { labels, counts })
    }

    pub fn for_class(&self, k: usize) -> ConfusionCounts {
        let n = self.labels.len();
        let tp = self.counts[k][k];
        let fn_ = (0..n).map(|j| self.counts[k][j]).sum::<u64>() - tp;
        let fp = (0..n).map(|i| self.counts[i][k]).sum::<u64>() - tp;
        let total: u64 = self.counts.iter().flatten().sum();
        ConfusionCounts { tp, fp, fn_, tn: total - tp - fn_ - fp }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Averaging<T> {
    /// Scores only the positive label.
    Binary { pos_label: T },
    /// Unweighted mean of per-class scores.
    Macro,
    /// Scores from counts pooled over classes.
    Micro,
    /// Per-class scores weighted by reference support.
    Weighted,
}

impl<T: FromStr> Averaging<T> {
    /// Parses `binary`, `macro`, `micro` or `weighted`; `pos_label` is used for `binary`.
    pub fn parse(name: &str, pos_label: T) -> CoreResult<Self> {
        match name {
            "binary" => Ok(Averaging::Binary { pos_label }),
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(CoreError::UnknownAveraging(String::from(other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecallF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn precision_recall_f1<T: Ord + Clone + Debug>(
    predictions: &[T],
    references: &[T],
    averaging: &Averaging<T>,
) -> CoreResult<PrecisionRecallF1> {
    let table = ConfusionTable::new(predictions, references)?;
    match averaging {
        Averaging::Binary { pos_label } => {
            let k = table
                .labels
                .binary_search(pos_label)
                .map_err(|_| CoreError::UnknownLabel(format!("{pos_label:?}")))?;
            let c = table.for_class(k);
            Ok(PrecisionRecallF1 { precision: c.precision(), recall: c.recall(), f1: c.f1() })
        }
        Averaging::Micro => {
            let mut pooled = ConfusionCounts::default();
            for k in 0..table.labels.len() {
                let c = table.for_class(k);
                pooled.tp += c.tp;
                pooled.fp += c.fp;
                pooled.fn_ += c.fn_;
            }
            Ok(PrecisionRecallF1 {
                precision: pooled.precision(),
                recall: pooled.recall(),
                f1: pooled.f1(),
            })
        }
        Averaging::Macro | Averaging::Weighted => {
            let weighted = matches!(averaging, Averaging::Weighted);
            let (mut p, mut r, mut f, mut wsum) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..table.labels.len() {
                let c = table.for_class(k);
                let w = if weighted { c.support() as f64 } else { 1.0 };
                p += w * c.precision();
                r += w * c.recall();
                f += w * c.f1();
                wsum += w;
            }
            Ok(PrecisionRecallF1 {
                precision: ratio(p, wsum),
                recall: ratio(r, wsum),
                f1: ratio(f, wsum),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 1], &[1, 0]).unwrap(), 0.5);
        assert_eq!(accuracy(&[3, 4, 5], &[3, 4, 5]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0, 0], &[1, 1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy::<i64>(&[], &[]), Err(CoreError::EmptyInput));
        assert_eq!(
            accuracy(&[1, 2], &[1, 2, 3]),
            Err(CoreError::LengthMismatch { expected: 2, found: 3 })
        );
    }

    #[test]
    fn binary_hand_counted() {
        // TP=1, FP=1, FN=1.
        let s = precision_recall_f1(&[1, 1, 0, 0], &[1, 0, 1, 0], &Averaging::Binary { pos_label: 1 })
            .unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn perfect_predictions() {
        let s = precision_recall_f1(&[1, 0, 1], &[1, 0, 1], &Averaging::Binary { pos_label: 1 }).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_predicted_positives_is_zero() {
        let s = precision_recall_f1(&[0, 0], &[1, 0], &Averaging::Binary { pos_label: 1 }).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_two_thirds() {
        let s = precision_recall_f1(&[1, 1], &[1, 0], &Averaging::Binary { pos_label: 1 }).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_pos_label_and_bad_averaging() {
        assert!(matches!(
            precision_recall_f1(&[0, 0], &[0, 0], &Averaging::Binary { pos_label: 1 }),
            Err(CoreError::UnknownLabel(_))
        ));
        assert!(matches!(Averaging::<i64>::parse("samples", 1), Err(CoreError::UnknownAveraging(_))));
    }

    #[test]
    fn micro_equals_accuracy_for_single_label() {
        let p = [0, 1, 2, 2, 1];
        let r = [0, 2, 2, 1, 1];
        let s = precision_recall_f1(&p, &r, &Averaging::Micro).unwrap();
        assert_eq!(s.precision, accuracy(&p, &r).unwrap());
        assert_eq!(s.f1, s.recall);
    }
}
