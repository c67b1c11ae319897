//! Scoring functions over materialized inputs.

pub mod bleu;
pub mod classification;
pub mod comparison;
pub mod measurement;
pub mod perplexity;
pub mod text;

pub use bleu::{corpus_bleu, BleuScore, NGramProfile, Smoothing};
pub use classification::{
    accuracy, precision_recall_f1, Averaging, ConfusionCounts, ConfusionTable, PrecisionRecallF1,
};
pub use comparison::{
    binomial_half_cdf, mcnemar, mcnemar_from_counts, paired_bootstrap, ContingencyPair, McNemar,
    PairedBootstrap,
};
pub use measurement::{
    duplicates_fraction, label_distribution, text_length_stats, Duplicates, LabelDistribution,
    LengthStats, LengthUnit,
};
pub use perplexity::{perplexity_from_logprobs, Perplexity};
pub use text::{exact_match, lcs_len, rouge_l, Normalization, RougeL};
