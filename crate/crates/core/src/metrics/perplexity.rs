use alloc::vec::Vec;

use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Perplexity {
    pub mean_perplexity: f64,
    pub perplexities: Vec<f64>,
}

/// Running mean; a constant sequence yields that constant exactly.
pub(crate) fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (k, x) in values.into_iter().enumerate() {
        mean += (x - mean) / (k as f64 + 1.0);
    }
    mean
}

/// Per-example `exp(−mean(logprobs))` from natural-log token probabilities.
pub fn perplexity_from_logprobs(logprobs: &[Vec<f64>]) -> CoreResult<Perplexity> {
    if logprobs.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let mut perplexities = Vec::with_capacity(logprobs.len());
    for (example, seq) in logprobs.iter().enumerate() {
        if seq.is_empty() {
            return Err(CoreError::EmptyInput);
        }
        for (position, &lp) in seq.iter().enumerate() {
            if !lp.is_finite() {
                return Err(CoreError::NonFiniteLogProb { example, position });
            }
            if lp > 0.0 {
                return Err(CoreError::PositiveLogProb { example, position });
            }
        }
        perplexities.push(libm::exp(-running_mean(seq.iter().copied())));
    }
    let mean_perplexity = running_mean(perplexities.iter().copied());
    Ok(Perplexity { mean_perplexity, perplexities })
}
