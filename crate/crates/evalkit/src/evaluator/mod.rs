//! Runs a model over a dataset for a task and scores it.
//!
//! Rows are preprocessed into requests, sent to a [`PredictionProvider`] in
//! batches, matched back by id, postprocessed and scored with each metric
//! over all rows. Wall-clock time per batch feeds [`PerfStats`]; metric
//! values never depend on batching. Postprocessed predictions and references
//! are written to a predictions artifact from which the metric values can be
//! recomputed offline.

pub mod dataset;
pub mod provider;
pub mod task;

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use evalkit_core::perf::{measure_perf, BatchTiming, PerfStats};
use evalkit_core::stats::{percentile_interval, ConfidenceInterval, ResamplePlan, DEFAULT_ITERATIONS, DEFAULT_LEVEL};
use evalkit_core::{CoreError, ModuleKind, ModuleResult, Params, ScoreKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::module::{ComputeOptions, Evaluate, EvaluationModule, ModuleDef};
use crate::registry::Registry;
pub use dataset::{canonical_json, Dataset, DatasetRef};
pub use provider::{InProcessProvider, Outcome, PredictionProvider, ProviderRef, Request, Response, SubprocessProvider};
pub use task::{metric_batch, Target, TaskKind, TaskSpec};

pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiOptions {
    pub level: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for CiOptions {
    fn default() -> Self {
        CiOptions { level: DEFAULT_LEVEL, iterations: DEFAULT_ITERATIONS, seed: 42 }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Longest wait for a batch to be fully answered.
    pub timeout: Duration,
    /// Batches sent ahead of the oldest unanswered one; 1 is strictly sequential.
    pub in_flight: usize,
    pub ci: Option<CiOptions>,
    /// Parameter overrides per metric id.
    pub metric_params: BTreeMap<String, Params>,
    /// Directory receiving the predictions artifact.
    pub artifact_dir: PathBuf,
}

impl EvalOptions {
    pub fn new(artifact_dir: impl Into<PathBuf>) -> Self {
        EvalOptions {
            batch_size: DEFAULT_BATCH_SIZE,
            timeout: DEFAULT_TIMEOUT,
            in_flight: 1,
            ci: None,
            metric_params: BTreeMap::new(),
            artifact_dir: artifact_dir.into(),
        }
    }

    pub fn batch_size(mut self, n: usize) -> Self {
        self.batch_size = n;
        self
    }

    pub fn in_flight(mut self, k: usize) -> Self {
        self.in_flight = k;
        self
    }

    pub fn timeout(mut self, t: Duration) -> Self {
        self.timeout = t;
        self
    }

    pub fn ci(mut self, ci: CiOptions) -> Self {
        self.ci = Some(ci);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: String,
    pub dataset: DatasetRef,
    pub provider: ProviderRef,
    /// Label string to id mapping applied to predictions and references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<BTreeMap<String, i64>>,
    pub metrics: Vec<ModuleResult>,
    /// Per metric id, per scalar output key.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub confidence_intervals: BTreeMap<String, BTreeMap<String, ConfidenceInterval>>,
    pub perf: PerfStats,
    pub predictions_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Milliseconds since the Unix epoch when the run finished.
    pub timestamp_ms: u64,
}

impl EvaluationReport {
    /// Value of a scalar output by key, searching every metric in order.
    pub fn scalar(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find_map(|m| m.scalar(key))
    }
}

/// Resolves metric names and checks they accept the task's metric inputs.
pub fn resolve_metrics(registry: &Registry, kind: TaskKind, names: &[String]) -> Result<Vec<ModuleDef>> {
    let schema = kind.metric_schema();
    names
        .iter()
        .map(|name| {
            let def = registry.resolve(name, None)?;
            let mismatch = |reason: String| Error::MetricSchemaMismatch {
                metric: name.clone(),
                task: kind.id().to_string(),
                reason,
            };
            if def.info.kind != ModuleKind::Metric {
                return Err(mismatch(format!("`{name}` is a {} module, not a metric", def.info.kind)));
            }
            if def.info.features != schema {
                return Err(mismatch(format!("expects {}, task produces {schema}", def.info.features)));
            }
            Ok(def)
        })
        .collect()
}

struct InFlight {
    batch: usize,
    sent: Instant,
    remaining: usize,
}

/// Sends all requests and collects one prediction per id.
fn collect_predictions(
    provider: &mut dyn PredictionProvider,
    requests: &[Request],
    options: &EvalOptions,
) -> Result<(Vec<Value>, Vec<BatchTiming>)> {
    let n = requests.len();
    let size = options.batch_size.max(1);
    let batches: Vec<&[Request]> = requests.chunks(size).collect();
    let mut predictions: Vec<Option<Value>> = vec![None; n];
    let mut timings: Vec<Option<BatchTiming>> = vec![None; batches.len()];
    let mut queue: VecDeque<InFlight> = VecDeque::new();
    let mut next = 0;
    let mut last_done: Option<Instant> = None;
    let mut done = 0;

    while done < batches.len() {
        while queue.len() < options.in_flight.max(1) && next < batches.len() {
            provider.send(batches[next])?;
            queue.push_back(InFlight { batch: next, sent: Instant::now(), remaining: batches[next].len() });
            next += 1;
        }
        let deadline = queue.iter().map(|f| f.sent + options.timeout).min().expect("a batch is in flight");
        let wait = deadline.saturating_duration_since(Instant::now());
        let pending: usize = queue.iter().map(|f| f.remaining).sum();
        let response = match provider.recv(wait) {
            Err(Error::ResponseTimeout { .. }) => {
                return Err(Error::ResponseTimeout { timeout_ms: options.timeout.as_millis(), pending })
            }
            other => other?,
        };
        let id = response.id;
        let idx = usize::try_from(id).ok().filter(|&i| i < n);
        let Some(idx) = idx else {
            return Err(Error::ProtocolViolation(format!("response for unknown request id {id}")));
        };
        let batch = idx / size;
        let Some(pos) = queue.iter().position(|f| f.batch == batch) else {
            let why = if predictions[idx].is_some() { "duplicate response" } else { "response for a request not yet sent" };
            return Err(Error::ProtocolViolation(format!("{why} for id {id}")));
        };
        if predictions[idx].is_some() {
            return Err(Error::ProtocolViolation(format!("duplicate response for id {id}")));
        }
        match response.outcome {
            Outcome::Prediction(v) => predictions[idx] = Some(v),
            Outcome::Error(message) => return Err(Error::ProviderError { id, message }),
        }
        queue[pos].remaining -= 1;
        if queue[pos].remaining == 0 {
            let f = queue.remove(pos).unwrap();
            let now = Instant::now();
            // Overlapping batches are charged only from the previous completion, so
            // per-batch durations add up to wall time in pipelined mode too.
            let start = match last_done {
                Some(t) if t > f.sent => t,
                _ => f.sent,
            };
            timings[f.batch] = Some(BatchTiming::new(batches[f.batch].len(), now - start));
            last_done = Some(now);
            done += 1;
        }
    }
    Ok((
        predictions.into_iter().map(|p| p.expect("every id answered")).collect(),
        timings.into_iter().map(|t| t.expect("every batch timed")).collect(),
    ))
}

fn write_artifact(path: &Path, requests: &[Request], preds: &[Target], refs: &[Target]) -> Result<()> {
    let io = |e| Error::io(format!("cannot write predictions artifact {}", path.display()), e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for (i, r) in requests.iter().enumerate() {
        let row = json!({
            "id": r.id,
            "input_hash": dataset::sha256_hex(canonical_json(&r.inputs).as_bytes()),
            "prediction": preds[i].to_json(),
            "reference": refs[i].to_json(),
        });
        writeln!(w, "{row}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn compute_metric(
    def: ModuleDef,
    registry: &Registry,
    preds: &[Target],
    refs: &[Target],
    params: &Params,
) -> Result<(ModuleResult, ModuleDef)> {
    let all: Vec<usize> = (0..preds.len()).collect();
    let mut module = EvaluationModule::new(def, registry.buffer_config().clone());
    let mut opts = ComputeOptions::new().batch(metric_batch(preds, refs, &all));
    opts.params = params.clone();
    let result = module.compute(opts)?;
    Ok((result, module.into_def()))
}

/// Percentile CIs for every scalar output of `def`, resampling examples.
fn metric_cis(
    def: &ModuleDef,
    result: &ModuleResult,
    preds: &[Target],
    refs: &[Target],
    ci: &CiOptions,
) -> Result<BTreeMap<String, ConfidenceInterval>> {
    let keys: Vec<&str> = def
        .info
        .outputs
        .iter()
        .filter(|o| o.kind == ScoreKind::Scalar)
        .map(|o| o.name.as_str())
        .collect();
    let plan = ResamplePlan::new(preds.len(), ci.iterations, ci.seed)?;
    let mut dists: Vec<Vec<f64>> = vec![Vec::with_capacity(ci.iterations); keys.len()];
    let mut idx = Vec::with_capacity(preds.len());
    for b in 0..ci.iterations {
        plan.indices_into(b, &mut idx)?;
        let scores = def.score_resolved(&metric_batch(preds, refs, &idx), &result.parameters_used).map_err(|e| match e {
            Error::Core(source) => Error::Resample { metric: def.info.id.clone(), iteration: b, source },
            other => other,
        })?;
        for (k, key) in keys.iter().enumerate() {
            let v = scores[*key].as_scalar().unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(CoreError::DegenerateMetric { iteration: b }.into());
            }
            dists[k].push(v);
        }
    }
    let mut out = BTreeMap::new();
    for (key, dist) in keys.into_iter().zip(dists) {
        let point = result.scalar(key).expect("declared scalar output");
        out.insert(key.to_string(), percentile_interval(point, dist, ci.level, &plan)?);
    }
    Ok(out)
}

/// Evaluates `provider` on the dataset at `dataset_path`.
/// An empty `metrics` list means the task's default metrics.
pub fn evaluate_task(
    registry: &Registry,
    task: &TaskSpec,
    dataset_path: &Path,
    provider: &mut dyn PredictionProvider,
    metrics: &[String],
    options: &EvalOptions,
) -> Result<EvaluationReport> {
    if options.batch_size == 0 {
        return Err(CoreError::InvalidParameter { name: "batch_size".into(), reason: "must be positive".into() }.into());
    }
    let data = Dataset::read(dataset_path)?;
    if data.is_empty() {
        return Err(CoreError::EmptyInput.into());
    }
    let (task, refs) = task.bind(&data)?;
    let names = if metrics.is_empty() { task.default_metrics.clone() } else { metrics.to_vec() };
    let defs = resolve_metrics(registry, task.kind, &names)?;

    let requests: Vec<Request> =
        data.rows.iter().enumerate().map(|(i, row)| Request { id: i as u64, inputs: task.preprocess(row) }).collect();
    let model = provider.start(task.kind.id())?;
    let (raw, timings) = collect_predictions(provider, &requests, options)?;
    provider.finish()?;

    let preds = raw
        .iter()
        .zip(&refs)
        .enumerate()
        .map(|(i, (v, r))| {
            task.postprocess(v, r).map_err(|e| Error::ProtocolViolation(format!("prediction for id {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results = Vec::with_capacity(defs.len());
    let mut cis = BTreeMap::new();
    for def in defs {
        let params = options.metric_params.get(&def.info.id).cloned().unwrap_or_default();
        let (result, def) = compute_metric(def, registry, &preds, &refs, &params)?;
        if let Some(ci) = &options.ci {
            cis.insert(result.module_id.clone(), metric_cis(&def, &result, &preds, &refs, ci)?);
        }
        results.push(result);
    }

    std::fs::create_dir_all(&options.artifact_dir)
        .map_err(|e| Error::io(format!("cannot create {}", options.artifact_dir.display()), e))?;
    let artifact = options.artifact_dir.join(PREDICTIONS_FILE);
    write_artifact(&artifact, &requests, &preds, &refs)?;

    Ok(EvaluationReport {
        task: task.kind.id().to_string(),
        dataset: data.reference.clone(),
        provider: ProviderRef { command: provider.command(), model },
        label_map: task.label_map.clone(),
        metrics: results,
        confidence_intervals: cis,
        perf: measure_perf(&timings)?,
        predictions_path: artifact,
        seed: options.ci.map(|c| c.seed),
        timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
    })
}

/// Reads a predictions artifact back as (predictions, references).
pub fn read_artifact(path: &Path, kind: TaskKind) -> Result<(Vec<Target>, Vec<Target>)> {
    let task = TaskSpec::new(kind);
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    let mut preds = Vec::new();
    let mut refs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::DatasetParse { path: path.to_path_buf(), line: i + 1, reason };
        let row: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let field = |name: &str| row.get(name).ok_or_else(|| bad(format!("missing `{name}`")));
        preds.push(task.target_from_json(field("prediction")?).map_err(bad)?);
        refs.push(task.target_from_json(field("reference")?).map_err(bad)?);
    }
    Ok((preds, refs))
}

/// Recomputes a report's metric results from its predictions artifact alone.
pub fn recompute_from_artifact(registry: &Registry, report: &EvaluationReport) -> Result<Vec<ModuleResult>> {
    let kind = TaskKind::parse(&report.task)?;
    let (preds, refs) = read_artifact(&report.predictions_path, kind)?;
    report
        .metrics
        .iter()
        .map(|m| {
            let def = registry.resolve(&m.module_id, Some(&m.module_version))?;
            Ok(compute_metric(def, registry, &preds, &refs, &m.parameters_used)?.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, rows: &[Value]) -> PathBuf {
        let p = dir.join("data.jsonl");
        let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
        std::fs::write(&p, text).unwrap();
        p
    }

    fn sentiment(dir: &Path) -> PathBuf {
        write(
            dir,
            &[
                json!({"text": "good", "label": "pos"}),
                json!({"text": "bad", "label": "neg"}),
                json!({"text": "fine", "label": "pos"}),
                json!({"text": "awful", "label": "neg"}),
            ],
        )
    }

    fn oracle(text: &Value) -> std::result::Result<Value, String> {
        let t = text["text"].as_str().unwrap();
        Ok(json!(if t == "good" || t == "fine" { "pos" } else { "neg" }))
    }

    #[test]
    fn perfect_provider_scores_one() {
        let d = tempfile::tempdir().unwrap();
        let data = sentiment(d.path());
        let mut p = InProcessProvider::new("oracle", oracle);
        let task = TaskSpec::new(TaskKind::TextClassification);
        let r = evaluate_task(&Registry::default(), &task, &data, &mut p, &[], &EvalOptions::new(d.path().join("out")))
            .unwrap();
        assert_eq!(r.scalar("accuracy"), Some(1.0));
        assert_eq!(r.provider.model, "oracle");
        assert_eq!(r.perf.n_examples, 4);
        assert_eq!(std::fs::read_to_string(&r.predictions_path).unwrap().lines().count(), 4);
    }

    #[test]
    fn constant_provider_scores_half() {
        let d = tempfile::tempdir().unwrap();
        let data = sentiment(d.path());
        let mut p = InProcessProvider::new("const", |_| Ok(json!("pos")));
        let task = TaskSpec::new(TaskKind::TextClassification);
        let names = vec!["accuracy".to_string(), "f1".to_string()];
        let r = evaluate_task(&Registry::default(), &task, &data, &mut p, &names, &EvalOptions::new(d.path()))
            .unwrap();
        assert_eq!(r.scalar("accuracy"), Some(0.5));
        assert_eq!(r.metrics.len(), 2);
    }

    #[test]
    fn out_of_order_and_pipelined_match_sequential() {
        let d = tempfile::tempdir().unwrap();
        let data = sentiment(d.path());
        let task = TaskSpec::new(TaskKind::TextClassification);
        let run = |p: &mut dyn PredictionProvider, opts: EvalOptions| {
            evaluate_task(&Registry::default(), &task, &data, p, &[], &opts).unwrap().metrics
        };
        let base = run(&mut InProcessProvider::new("o", oracle), EvalOptions::new(d.path()).batch_size(1));
        let rev = run(&mut InProcessProvider::new("o", oracle).reversed(), EvalOptions::new(d.path()).batch_size(3));
        let pipe = run(
            &mut InProcessProvider::new("o", oracle).reversed(),
            EvalOptions::new(d.path()).batch_size(1).in_flight(3),
        );
        assert_eq!(base, rev);
        assert_eq!(base, pipe);
    }

    #[test]
    fn provider_error_fails_the_run() {
        let d = tempfile::tempdir().unwrap();
        let data = sentiment(d.path());
        let mut p = InProcessProvider::new("e", |v| if v["text"] == "bad" { Err("boom".into()) } else { Ok(json!("pos")) });
        let task = TaskSpec::new(TaskKind::TextClassification);
        let err = evaluate_task(&Registry::default(), &task, &data, &mut p, &[], &EvalOptions::new(d.path())).unwrap_err();
        assert!(matches!(err, Error::ProviderError { id: 1, .. }), "{err}");
    }

    #[test]
    fn metric_schema_mismatch() {
        let d = tempfile::tempdir().unwrap();
        let data = sentiment(d.path());
        let mut p = InProcessProvider::new("o", oracle);
        let task = TaskSpec::new(TaskKind::TextClassification);
        for m in ["bleu", "duplicates"] {
            let err = evaluate_task(&Registry::default(), &task, &data, &mut p, &[m.to_string()], &EvalOptions::new(d.path()))
                .unwrap_err();
            assert!(matches!(err, Error::MetricSchemaMismatch { .. }), "{err}");
        }
    }

    #[test]
    fn cis_are_reproducible_and_recompute_matches() {
        let d = tempfile::tempdir().unwrap();
        let rows: Vec<Value> = (0..40).map(|i| json!({"text": format!("t{i}"), "label": i % 3})).collect();
        let data = write(d.path(), &rows);
        let task = TaskSpec::new(TaskKind::TextClassification);
        let opts = EvalOptions::new(d.path()).ci(CiOptions { level: 0.9, iterations: 200, seed: 5 });
        let provider = || InProcessProvider::new("m", |v| Ok(json!(v["text"].as_str().unwrap().len() as i64 % 3)));
        let names = vec!["accuracy".to_string(), "f1".to_string()];
        let mut params = Params::new();
        params.insert("average".into(), "macro".into());
        let mut opts = opts;
        opts.metric_params.insert("f1".into(), params);
        let a = evaluate_task(&Registry::default(), &task, &data, &mut provider(), &names, &opts).unwrap();
        let b = evaluate_task(&Registry::default(), &task, &data, &mut provider(), &names, &opts).unwrap();
        assert_eq!(a.confidence_intervals, b.confidence_intervals);
        let ci = a.confidence_intervals["accuracy"]["accuracy"];
        assert!(ci.low <= ci.high && ci.level == 0.9);
        assert_eq!(recompute_from_artifact(&Registry::default(), &a).unwrap(), a.metrics);
        for (id, per_key) in &a.confidence_intervals {
            let m = a.metrics.iter().find(|m| &m.module_id == id).unwrap();
            assert!(per_key.keys().all(|k| m.values.contains_key(k)));
        }
    }

    #[test]
    fn qa_uses_exact_match() {
        let d = tempfile::tempdir().unwrap();
        let data = write(
            d.path(),
            &[
                json!({"question": "capital of France?", "context": "Paris is...", "answers": {"text": ["Paris"]}}),
                json!({"question": "2+2?", "context": "four", "answers": ["4"]}),
            ],
        );
        let mut p = InProcessProvider::new("qa", |v| Ok(json!(if v["context"] == "four" { "5" } else { " paris " })));
        let task = TaskSpec::new(TaskKind::QuestionAnsweringExtractive);
        let mut opts = EvalOptions::new(d.path());
        let mut params = Params::new();
        params.insert("normalize".into(), "casefold+strip".into());
        opts.metric_params.insert("exact_match".into(), params);
        let r = evaluate_task(&Registry::default(), &task, &data, &mut p, &[], &opts).unwrap();
        assert_eq!(r.scalar("exact_match"), Some(0.5));
        assert_eq!(recompute_from_artifact(&Registry::default(), &r).unwrap(), r.metrics);
    }
}
