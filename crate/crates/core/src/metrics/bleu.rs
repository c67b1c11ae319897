//! Corpus-level BLEU.
//!
//! `bleu = BP · exp(Σₙ (1/N) · ln pₙ)` where `pₙ` is the corpus-summed clipped
//! n-gram precision. Each candidate n-gram count is clipped to its largest
//! count in any single reference of that candidate. The brevity penalty is
//! `1` when the candidate length `c` exceeds the effective reference length
//! `r`, otherwise `exp(1 − r/c)`; `r` sums, per sentence, the reference length
//! closest to the candidate length, ties going to the shorter reference.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Unsmoothed; any zero precision makes the score zero.
    #[default]
    None,
    /// `(matches + 1) / (candidate n-grams + 1)` at every order.
    AddOneClip,
}

impl Smoothing {
    pub fn parse(name: &str) -> CoreResult<Self> {
        match name {
            "none" => Ok(Smoothing::None),
            "add-1-clip" => Ok(Smoothing::AddOneClip),
            other => Err(CoreError::InvalidParameter {
                name: String::from("smoothing"),
                reason: alloc::format!("unknown smoothing `{other}`"),
            }),
        }
    }
}

/// Counts of every n-gram of one order in a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramProfile<'a> {
    pub order: usize,
    pub counts: BTreeMap<&'a [String], usize>,
}

impl<'a> NGramProfile<'a> {
    pub fn new(tokens: &'a [String], order: usize) -> Self {
        let mut counts = BTreeMap::new();
        if order > 0 && tokens.len() >= order {
            for gram in tokens.windows(order) {
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
        NGramProfile { order, counts }
    }

    /// Total number of n-grams.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Element-wise maximum with `other`.
    pub fn max_with(&mut self, other: &NGramProfile<'a>) {
        for (gram, &count) in &other.counts {
            let slot = self.counts.entry(gram).or_insert(0);
            *slot = (*slot).max(count);
        }
    }

    /// Matches of `self` clipped by `ceiling`.
    pub fn clipped_matches(&self, ceiling: &NGramProfile<'_>) -> usize {
        self.counts
            .iter()
            .map(|(gram, &count)| count.min(ceiling.counts.get(gram).copied().unwrap_or(0)))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    pub bleu: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub length_ratio: f64,
    pub translation_length: usize,
    pub reference_length: usize,
    /// Clipped matches per order, corpus-summed.
    pub matches: Vec<usize>,
    /// Candidate n-grams per order, corpus-summed.
    pub possible: Vec<usize>,
}

fn closest_ref_len(candidate_len: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(candidate_len), len))
        .unwrap_or(0)
}

/// Corpus BLEU over pre-tokenized candidates, each with a non-empty reference set.
pub fn corpus_bleu(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    max_order: usize,
    smoothing: Smoothing,
) -> CoreResult<BleuScore> {
    if candidates.is_empty() || references.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    if candidates.len() != references.len() {
        return Err(CoreError::LengthMismatch {
            expected: candidates.len(),
            found: references.len(),
        });
    }
    if max_order == 0 {
        return Err(CoreError::InvalidParameter {
            name: String::from("max_order"),
            reason: String::from("must be at least 1"),
        });
    }

    let mut matches = vec![0usize; max_order];
    let mut possible = vec![0usize; max_order];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;

    for (index, (cand, refs)) in candidates.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(CoreError::EmptyReferenceSet { index });
        }
        cand_len += cand.len();
        ref_len += closest_ref_len(cand.len(), refs);
        for n in 1..=max_order {
            let cand_profile = NGramProfile::new(cand, n);
            let mut ceiling = NGramProfile::new(&refs[0], n);
            for r in &refs[1..] {
                ceiling.max_with(&NGramProfile::new(r, n));
            }
            matches[n - 1] += cand_profile.clipped_matches(&ceiling);
            possible[n - 1] += cand_profile.total();
        }
    }

    let precisions: Vec<f64> = matches
        .iter()
        .zip(&possible)
        .map(|(&m, &p)| match smoothing {
            Smoothing::None => {
                if p == 0 {
                    0.0
                } else {
                    m as f64 / p as f64
                }
            }
            Smoothing::AddOneClip => (m as f64 + 1.0) / (p as f64 + 1.0),
        })
        .collect();

    let geo_mean = if precisions.iter().all(|&p| p > 0.0) {
        let w = 1.0 / max_order as f64;
        libm::exp(precisions.iter().map(|&p| w * libm::log(p)).sum::<f64>())
    } else {
        0.0
    };

    let (brevity_penalty, length_ratio) = if cand_len == 0 {
        (0.0, 0.0)
    } else {
        let ratio = if ref_len == 0 { 0.0 } else { cand_len as f64 / ref_len as f64 };
        let bp = if cand_len > ref_len {
            1.0
        } else {
            libm::exp(1.0 - ref_len as f64 / cand_len as f64)
        };
        (bp, ratio)
    };

    Ok(BleuScore {
        bleu: geo_mean * brevity_penalty,
        precisions,
        brevity_penalty,
        length_ratio,
        translation_length: cand_len,
        reference_length: ref_len,
        matches,
        possible,
    })
}
