//! Built-in module implementations, looked up by id.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::Batch;
use crate::error::{CoreError, CoreResult};
use crate::metrics::*;
use crate::module::{ModuleInfo, ModuleKind, Scorer};
use crate::params::{get_int, get_str, ParamValue, Params};
use crate::result::{OutputSpec, ScoreValue, Scores};
use crate::schema::{ColumnType, FeatureSchema};
use crate::tokenize::{tokenize_13a, tokenize_whitespace};

pub const CANONICAL_VERSION: &str = "1.0.0";

/// Ids of every built-in module, in listing order.
pub const CANONICAL_IDS: &[&str] = &[
    "accuracy",
    "precision",
    "recall",
    "f1",
    "exact_match",
    "bleu",
    "rouge",
    "perplexity",
    "mcnemar",
    "paired_bootstrap",
    "label_distribution",
    "duplicates",
    "text_length",
];

pub fn lookup(id: &str) -> Option<Box<dyn Scorer>> {
    Some(match id {
        "accuracy" => Box::new(Accuracy),
        "precision" => Box::new(Prf(PrfOutput::Precision)),
        "recall" => Box::new(Prf(PrfOutput::Recall)),
        "f1" => Box::new(Prf(PrfOutput::F1)),
        "exact_match" => Box::new(ExactMatch),
        "bleu" => Box::new(Bleu),
        "rouge" => Box::new(Rouge),
        "perplexity" => Box::new(PerplexityModule),
        "mcnemar" => Box::new(McNemarModule),
        "paired_bootstrap" => Box::new(PairedBootstrapModule),
        "label_distribution" => Box::new(LabelDistributionModule),
        "duplicates" => Box::new(DuplicatesModule),
        "text_length" => Box::new(TextLengthModule),
        _ => return None,
    })
}

pub fn all() -> Vec<Box<dyn Scorer>> {
    CANONICAL_IDS.iter().filter_map(|id| lookup(id)).collect()
}

fn schema(cols: &[(&str, ColumnType)]) -> FeatureSchema {
    FeatureSchema::new(cols.iter().copied()).expect("static schema")
}

fn info(
    id: &str,
    kind: ModuleKind,
    cols: &[(&str, ColumnType)],
    outputs: Vec<OutputSpec>,
    params: &[(&str, ParamValue)],
) -> ModuleInfo {
    ModuleInfo {
        id: id.to_string(),
        version: CANONICAL_VERSION.to_string(),
        kind,
        features: schema(cols),
        outputs,
        parameters: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    }
}

fn scores<const N: usize>(pairs: [(&str, ScoreValue); N]) -> Scores {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

const INT_METRIC: &[(&str, ColumnType)] =
    &[("predictions", ColumnType::Int), ("references", ColumnType::Int)];
const INT_COMPARISON: &[(&str, ColumnType)] = &[
    ("predictions_a", ColumnType::Int),
    ("predictions_b", ColumnType::Int),
    ("references", ColumnType::Int),
];

pub struct Accuracy;

impl Scorer for Accuracy {
    fn info(&self) -> ModuleInfo {
        info(
            "accuracy",
            ModuleKind::Metric,
            INT_METRIC,
            vec![OutputSpec::scalar("accuracy", Some(true))],
            &[],
        )
    }

    fn score(&self, batch: &Batch, _params: &Params) -> CoreResult<Scores> {
        let acc = accuracy(batch.ints("predictions")?, batch.ints("references")?)?;
        Ok(scores([("accuracy", acc.into())]))
    }
}

#[derive(Clone, Copy)]
enum PrfOutput {
    Precision,
    Recall,
    F1,
}

/// `precision`, `recall` and `f1` share one implementation and differ only in the reported key.
struct Prf(PrfOutput);

impl Prf {
    fn key(&self) -> &'static str {
        match self.0 {
            PrfOutput::Precision => "precision",
            PrfOutput::Recall => "recall",
            PrfOutput::F1 => "f1",
        }
    }
}

impl Scorer for Prf {
    fn info(&self) -> ModuleInfo {
        info(
            self.key(),
            ModuleKind::Metric,
            INT_METRIC,
            vec![OutputSpec::scalar(self.key(), Some(true))],
            &[("average", "binary".into()), ("pos_label", ParamValue::Int(1))],
        )
    }

    fn score(&self, batch: &Batch, params: &Params) -> CoreResult<Scores> {
        let averaging = Averaging::parse(get_str(params, "average")?, get_int(params, "pos_label")?)?;
        let s = precision_recall_f1(batch.ints("predictions")?, batch.ints("references")?, &averaging)?;
        let v = match self.0 {
            PrfOutput::Precision => s.precision,
            PrfOutput::Recall => s.recall,
            PrfOutput::F1 => s.f1,
        };
        Ok(scores([(self.key(), v.into())]))
    }
}

pub struct ExactMatch;

impl Scorer for ExactMatch {
    fn info(&self) -> ModuleInfo {
        info(
            "exact_match",
            ModuleKind::Metric,
            &[("predictions", ColumnType::Str), ("references", ColumnType::Str)],
            vec![OutputSpec::scalar("exact_match", Some(true))],
            &[("normalize", "none".into())],
        )
    }

    fn score(&self, batch: &Batch, params: &Params) -> CoreResult<Scores> {
        let norm = Normalization::parse(get_str(params, "normalize")?)?;
        let em = exact_match(batch.strs("predictions")?, batch.strs("references")?, norm)?;
        Ok(scores([("exact_match", em.into())]))
    }
}

pub struct Bleu;

impl Scorer for Bleu {
    fn info(&self) -> ModuleInfo {
        info(
            "bleu",
            ModuleKind::Metric,
            &[("predictions", ColumnType::Str), ("references", ColumnType::StrSeq)],
            vec![
                OutputSpec::scalar("bleu", Some(true)),
                OutputSpec::array("precisions"),
                OutputSpec::scalar("brevity_penalty", None),
                OutputSpec::scalar("length_ratio", None),
            ],
            &[
                ("max_order", ParamValue::Int(4)),
                ("smoothing", "none".into()),
                ("tokenize", "13a".into()),
            ],
        )
    }

    fn score(&self, batch: &Batch, params: &Params) -> CoreResult<Scores> {
        let max_order = get_int(params, "max_order")?;
        if !(1..=16).contains(&max_order) {
            return Err(CoreError::InvalidParameter {
                name: "max_order".into(),
                reason: "must be between 1 and 16".into(),
            });
        }
        let smoothing = Smoothing::parse(get_str(params, "smoothing")?)?;
        let tok: fn(&str) -> Vec<String> = match get_str(params, "tokenize")? {
            "13a" => tokenize_13a,
            "none" => tokenize_whitespace,
            other => {
                return Err(CoreError::InvalidParameter {
                    name: "tokenize".into(),
                    reason: format!("unknown tokenizer `{other}`"),
                })
            }
        };
        let cands: Vec<Vec<String>> = batch.strs("predictions")?.iter().map(|s| tok(s)).collect();
        let refs: Vec<Vec<Vec<String>>> = batch
            .str_seqs("references")?
            .iter()
            .map(|set| set.iter().map(|s| tok(s)).collect())
            .collect();
        let s = corpus_bleu(&cands, &refs, max_order as usize, smoothing)?;
        Ok(scores([
            ("bleu", s.bleu.into()),
            ("precisions", ScoreValue::Array(s.precisions)),
            ("brevity_penalty", s.brevity_penalty.into()),
            ("length_ratio", s.length_ratio.into()),
        ]))
    }
}

pub struct Rouge;

impl Scorer for Rouge {
    fn info(&self) -> ModuleInfo {
        info(
            "rouge",
            ModuleKind::Metric,
            &[("predictions", ColumnType::Str), ("references", ColumnType::Str)],
            vec![
                OutputSpec::scalar("rougeL_f1", Some(true)),
                OutputSpec::scalar("rougeL_precision", Some(true)),
                OutputSpec::scalar("rougeL_recall", Some(true)),
            ],
            &[],
        )
    }

    fn score(&self, batch: &Batch, _params: &Params) -> CoreResult<Scores> {
        let r = rouge_l(batch.strs("predictions")?, batch.strs("references")?)?;
        Ok(scores([
            ("rougeL_f1", r.f1.into()),
            ("rougeL_precision", r.precision.into()),
            ("rougeL_recall", r.recall.into()),
        ]))
    }
}

pub struct PerplexityModule;

impl Scorer for PerplexityModule {
    fn info(&self) -> ModuleInfo {
        info(
            "perplexity",
            ModuleKind::Measurement,
            &[("data", ColumnType::FloatSeq)],
            vec![OutputSpec::scalar("mean_perplexity", Some(false)), OutputSpec::array("perplexities")],
            &[],
        )
    }

    fn score(&self, batch: &Batch, _params: &Params) -> CoreResult<Scores> {
        let p = perplexity_from_logprobs(batch.float_seqs("data")?)?;
        Ok(scores([
            ("mean_perplexity", p.mean_perplexity.into()),
            ("perplexities", ScoreValue::Array(p.perplexities)),
        ]))
    }
}

pub struct McNemarModule;

impl Scorer for McNemarModule {
    fn info(&self) -> ModuleInfo {
        info(
            "mcnemar",
            ModuleKind::Comparison,
            INT_COMPARISON,
            vec![
                OutputSpec::scalar("p_value", None),
                OutputSpec::scalar("statistic", None),
                OutputSpec::scalar("n01", None),
                OutputSpec::scalar("n10", None),
            ],
            &[],
        )
    }

    fn score(&self, batch: &Batch, _params: &Params) -> CoreResult<Scores> {
        let m = mcnemar(
            batch.ints("predictions_a")?,
            batch.ints("predictions_b")?,
            batch.ints("references")?,
        )?;
        Ok(scores([
            ("p_value", m.p_value.into()),
            ("statistic", m.statistic.into()),
            ("n01", (m.n01 as f64).into()),
            ("n10", (m.n10 as f64).into()),
        ]))
    }
}

pub struct PairedBootstrapModule;

fn non_negative(params: &Params, name: &str) -> CoreResult<u64> {
    let v = get_int(params, name)?;
    u64::try_from(v).map_err(|_| CoreError::InvalidParameter {
        name: name.to_string(),
        reason: "must be non-negative".into(),
    })
}

impl Scorer for PairedBootstrapModule {
    fn info(&self) -> ModuleInfo {
        info(
            "paired_bootstrap",
            ModuleKind::Comparison,
            INT_COMPARISON,
            vec![
                OutputSpec::scalar("delta", None),
                OutputSpec::scalar("p_value", None),
                OutputSpec::scalar("wins_a", None),
                OutputSpec::scalar("wins_b", None),
                OutputSpec::scalar("ties", None),
            ],
            &[
                ("metric", "accuracy".into()),
                ("iterations", ParamValue::Int(crate::stats::DEFAULT_ITERATIONS as i64)),
                ("seed", ParamValue::Int(42)),
            ],
        )
    }

    fn score(&self, batch: &Batch, params: &Params) -> CoreResult<Scores> {
        let metric_id = get_str(params, "metric")?;
        let metric = lookup(metric_id).ok_or_else(|| CoreError::UnknownModule(metric_id.to_string()))?;
        let metric_info = metric.info();
        if metric_info.kind != ModuleKind::Metric || metric_info.features != schema(INT_METRIC) {
            return Err(CoreError::IncompatibleSchemas(format!(
                "`{metric_id}` does not score integer predictions against integer references"
            )));
        }
        let key = metric_info.primary_output().unwrap_or(metric_id).to_string();
        let iterations = non_negative(params, "iterations")? as usize;
        let seed = non_negative(params, "seed")?;

        let side_a = batch.project(&[("predictions_a", "predictions"), ("references", "references")])?;
        let side_b = batch.project(&[("predictions_b", "predictions"), ("references", "references")])?;
        let metric_params = metric_info.parameters.clone();
        let value = |b: &Batch| -> CoreResult<f64> {
            let s = metric.score(b, &metric_params)?;
            s.get(&key).and_then(ScoreValue::as_scalar).ok_or_else(|| {
                CoreError::SchemaMismatch(format!("`{metric_id}` produced no scalar `{key}`"))
            })
        };
        let n = batch.num_rows();
        if n == 0 {
            return Err(CoreError::EmptyInput);
        }
        let out = paired_bootstrap(n, iterations, seed, |idx| {
            if idx.len() == n && idx.iter().enumerate().all(|(i, &j)| i == j) {
                Ok(value(&side_a)? - value(&side_b)?)
            } else {
                Ok(value(&side_a.select(idx))? - value(&side_b.select(idx))?)
            }
        })?;
        Ok(scores([
            ("delta", out.delta.into()),
            ("p_value", out.p_value.into()),
            ("wins_a", (out.wins_a as f64).into()),
            ("wins_b", (out.wins_b as f64).into()),
            ("ties", (out.ties as f64).into()),
        ]))
    }
}

pub struct LabelDistributionModule;

impl Scorer for LabelDistributionModule {
    fn info(&self) -> ModuleInfo {
        info(
            "label_distribution",
            ModuleKind::Measurement,
            &[("data", ColumnType::Int)],
            vec![
                OutputSpec::map("proportions"),
                OutputSpec::scalar("entropy_nats", None),
                OutputSpec::scalar("imbalance_ratio", None),
            ],
            &[],
        )
    }

    fn score(&self, batch: &Batch, _params: &Params) -> CoreResult<Scores> {
        let d = label_distribution(batch.ints("data")?)?;
        Ok(scores([
            ("proportions", ScoreValue::Map(d.proportions)),
            ("entropy_nats", d.entropy_nats.into()),
            ("imbalance_ratio", d.imbalance_ratio.into()),
        ]))
    }
}

pub struct DuplicatesModule;

impl Scorer for DuplicatesModule {
    fn info(&self) -> ModuleInfo {
        info(
            "duplicates",
            ModuleKind::Measurement,
            &[("data", ColumnType::Str)],
            vec![
                OutputSpec::scalar("duplicate_fraction", Some(false)),
                OutputSpec::scalar("n_unique", None),
            ],
            &[],
        )
    }

    fn score(&self, batch: &Batch, _params: &Params) -> CoreResult<Scores> {
        let d = duplicates_fraction(batch.strs("data")?)?;
        Ok(scores([
            ("duplicate_fraction", d.duplicate_fraction.into()),
            ("n_unique", (d.n_unique as f64).into()),
        ]))
    }
}

pub struct TextLengthModule;

impl Scorer for TextLengthModule {
    fn info(&self) -> ModuleInfo {
        info(
            "text_length",
            ModuleKind::Measurement,
            &[("data", ColumnType::Str)],
            vec![
                OutputSpec::scalar("mean", None),
                OutputSpec::scalar("std", None),
                OutputSpec::scalar("min", None),
                OutputSpec::scalar("max", None),
                OutputSpec::array("histogram"),
            ],
            &[("unit", "chars".into())],
        )
    }

    fn score(&self, batch: &Batch, params: &Params) -> CoreResult<Scores> {
        let unit = LengthUnit::parse(get_str(params, "unit")?)?;
        let s = text_length_stats(batch.strs("data")?, unit)?;
        Ok(scores([
            ("mean", s.mean.into()),
            ("std", s.std.into()),
            ("min", s.min.into()),
            ("max", s.max.into()),
            ("histogram", ScoreValue::Array(s.histogram)),
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_canonical_module_is_well_formed() {
        for id in CANONICAL_IDS {
            let m = lookup(id).unwrap();
            let info = m.info();
            assert_eq!(info.id, *id);
            info.check().unwrap();
        }
        assert!(lookup("nonexistent_xyz").is_none());
    }

    #[test]
    fn accuracy_listing_example() {
        let b = Batch::new().with("predictions", vec![1i64, 1]).with("references", vec![1i64, 0]);
        let s = Accuracy.score(&b, &Params::new()).unwrap();
        assert_eq!(s["accuracy"], ScoreValue::Scalar(0.5));
        Accuracy.info().check_scores(&s).unwrap();
    }

    #[test]
    fn paired_bootstrap_rejects_non_label_metric() {
        let b = Batch::new()
            .with("predictions_a", vec![1i64])
            .with("predictions_b", vec![1i64])
            .with("references", vec![1i64]);
        let mut p = PairedBootstrapModule.info().parameters;
        p.insert("metric".into(), "bleu".into());
        assert!(matches!(PairedBootstrapModule.score(&b, &p), Err(CoreError::IncompatibleSchemas(_))));
        p.insert("metric".into(), "nope".into());
        assert!(matches!(PairedBootstrapModule.score(&b, &p), Err(CoreError::UnknownModule(_))));
    }
}
