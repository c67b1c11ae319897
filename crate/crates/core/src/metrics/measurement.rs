//! Dataset measurements: label skew, duplicates and text lengths.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Display;

use super::perplexity::running_mean;
use crate::error::{CoreError, CoreResult};
use crate::tokenize::tokenize_13a;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    /// Label (as text) to proportion of rows.
    pub proportions: BTreeMap<String, f64>,
    pub entropy_nats: f64,
    /// Largest over smallest count among observed labels.
    pub imbalance_ratio: f64,
}

pub fn label_distribution<T: Ord + Display>(data: &[T]) -> CoreResult<LabelDistribution> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let mut counts: BTreeMap<&T, u64> = BTreeMap::new();
    for x in data {
        *counts.entry(x).or_default() += 1;
    }
    let n = data.len() as f64;
    let mut proportions = BTreeMap::new();
    let mut entropy = 0.0;
    for (label, &c) in &counts {
        let p = c as f64 / n;
        proportions.insert(label.to_string(), p);
        entropy -= p * libm::log(p);
    }
    let max = *counts.values().max().unwrap_or(&1);
    let min = *counts.values().min().unwrap_or(&1);
    Ok(LabelDistribution {
        proportions,
        // A single label gives -1·ln(1) = -0.0; report plain zero.
        entropy_nats: entropy + 0.0,
        imbalance_ratio: max as f64 / min as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duplicates {
    pub duplicate_fraction: f64,
    pub n_unique: usize,
}

pub fn duplicates_fraction(data: &[String]) -> CoreResult<Duplicates> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let n_unique = data.iter().map(String::as_str).collect::<BTreeSet<_>>().len();
    Ok(Duplicates {
        duplicate_fraction: (data.len() - n_unique) as f64 / data.len() as f64,
        n_unique,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthUnit {
    /// Unicode scalar values.
    #[default]
    Chars,
    /// 13a tokens.
    Tokens,
}

impl LengthUnit {
    pub fn parse(name: &str) -> CoreResult<Self> {
        match name {
            "chars" => Ok(LengthUnit::Chars),
            "tokens" => Ok(LengthUnit::Tokens),
            other => Err(CoreError::InvalidParameter {
                name: String::from("unit"),
                reason: alloc::format!("unknown unit `{other}`"),
            }),
        }
    }

    pub fn measure(self, text: &str) -> usize {
        match self {
            LengthUnit::Chars => text.chars().count(),
            LengthUnit::Tokens => tokenize_13a(text).len(),
        }
    }
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LengthStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts in ten equal-width bins over `[min, max]`; the last bin is closed.
    pub histogram: Vec<f64>,
}

pub fn text_length_stats(data: &[String], unit: LengthUnit) -> CoreResult<LengthStats> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let lengths: Vec<f64> = data.iter().map(|s| unit.measure(s) as f64).collect();
    let mean = running_mean(lengths.iter().copied());
    let var = lengths.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / lengths.len() as f64;
    let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut histogram = vec![0.0; HISTOGRAM_BINS];
    let width = (max - min) / HISTOGRAM_BINS as f64;
    for &x in &lengths {
        let bin = if width == 0.0 {
            0
        } else {
            (((x - min) / width) as usize).min(HISTOGRAM_BINS - 1)
        };
        histogram[bin] += 1.0;
    }
    Ok(LengthStats { mean, std: libm::sqrt(var), min, max, histogram })
}
