//! String-level metrics: exact match and ROUGE-L.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::classification::{check_lengths, ratio};
use crate::error::{CoreError, CoreResult};
use crate::tokenize::tokenize_13a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// Lowercase and trim surrounding whitespace.
    CasefoldStrip,
}

impl Normalization {
    pub fn parse(name: &str) -> CoreResult<Self> {
        match name {
            "none" => Ok(Normalization::None),
            "casefold+strip" => Ok(Normalization::CasefoldStrip),
            other => Err(CoreError::InvalidParameter {
                name: String::from("normalize"),
                reason: alloc::format!("unknown normalization `{other}`"),
            }),
        }
    }

    pub fn apply(self, s: &str) -> String {
        match self {
            Normalization::None => String::from(s),
            Normalization::CasefoldStrip => s.trim().to_lowercase(),
        }
    }
}

pub fn exact_match(
    predictions: &[String],
    references: &[String],
    normalize: Normalization,
) -> CoreResult<f64> {
    check_lengths(predictions.len(), references.len())?;
    let hits = predictions
        .iter()
        .zip(references)
        .filter(|(p, r)| normalize.apply(p) == normalize.apply(r))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn rouge_l_tokens(prediction: &[String], reference: &[String]) -> RougeL {
    let l = lcs_len(prediction, reference) as f64;
    let precision = ratio(l, prediction.len() as f64);
    let recall = ratio(l, reference.len() as f64);
    // 2PR/(P+R) written over counts, so exact fractions stay exact.
    let f1 = ratio(2.0 * l, (prediction.len() + reference.len()) as f64);
    RougeL { precision, recall, f1 }
}

/// Mean sentence-level ROUGE-L over pairs, tokenized with the 13a rules.
pub fn rouge_l(predictions: &[String], references: &[String]) -> CoreResult<RougeL> {
    check_lengths(predictions.len(), references.len())?;
    let scores: Vec<RougeL> = predictions
        .iter()
        .zip(references)
        .map(|(p, r)| rouge_l_tokens(&tokenize_13a(p), &tokenize_13a(r)))
        .collect();
    let n = scores.len() as f64;
    Ok(RougeL {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    })
}
