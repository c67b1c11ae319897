//! A local evaluation service.
//!
//! Jobs name a task, a dataset, provider commands and metrics. Workers run
//! them through the evaluator and record one result proposal per model.
//! Model owners approve or close proposals. Leaderboards rank every public
//! proposal for a dataset and metric, labelling verified results (produced
//! here) apart from imported self-reported ones.

pub mod api;
pub mod error;
pub mod leaderboard;
pub mod store;
pub mod types;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::evaluator::dataset::{canonical_json, file_sha256, sha256_hex};
use crate::evaluator::{evaluate_task, resolve_metrics, EvalOptions, EvaluationReport, SubprocessProvider, TaskKind, TaskSpec};
use crate::registry::Registry;
pub use error::{FieldError, ServiceError, ServiceResult};
use store::{ClaimedJob, Store};
pub use types::*;

/// Environment variable naming the service data directory.
pub const ENV_SERVICE_DIR: &str = "EVALKIT_SERVICE_DIR";

/// Bearer tokens of model owners, keyed by model-name prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerTable {
    #[serde(default, rename = "owner")]
    pub owners: Vec<Owner>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Owner {
    /// Applies to every model whose name starts with this prefix.
    pub prefix: String,
    pub token: String,
}

impl OwnerTable {
    /// Reads `[[owner]]` tables with `prefix` and `token` keys.
    pub fn read(path: &Path) -> crate::Result<OwnerTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::io(format!("cannot read owner table {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| crate::Error::InvalidManifest { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn add(&mut self, prefix: &str, token: &str) {
        self.owners.push(Owner { prefix: prefix.into(), token: token.into() });
    }

    pub fn authorizes(&self, model: &str, token: &str) -> bool {
        !token.is_empty() && self.owners.iter().any(|o| model.starts_with(&o.prefix) && o.token == token)
    }
}

/// Outcome of a submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submitted {
    pub job: EvaluationJob,
    /// False when an identical earlier submission was returned.
    pub created: bool,
}

pub struct Service {
    root: PathBuf,
    registry: Registry,
    owners: OwnerTable,
    store: Mutex<Store>,
    ids: Mutex<ulid::Generator>,
    /// Lease of this process's worker pool.
    instance: String,
    poll: Duration,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Service {
    pub fn open(root: impl Into<PathBuf>, registry: Registry, owners: OwnerTable) -> ServiceResult<Service> {
        let root = root.into();
        let store = Store::open(&root)?;
        Ok(Service {
            root,
            registry,
            owners,
            store: Mutex::new(store),
            ids: Mutex::new(ulid::Generator::new()),
            instance: ulid::Ulid::new().to_string(),
            poll: Duration::from_millis(200),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// A new ULID, strictly increasing within this process.
    fn next_id(&self) -> String {
        let mut g = self.ids.lock().unwrap();
        loop {
            if let Ok(id) = g.generate() {
                return id.to_string();
            }
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn validate(&self, spec: &JobSpec) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let kind = match TaskKind::parse(&spec.task) {
            Ok(k) => Some(k),
            Err(e) => {
                errs.push(FieldError::new("task", e.to_string()));
                None
            }
        };
        if spec.providers.is_empty() {
            errs.push(FieldError::new("providers", "at least one provider is required"));
        }
        for (i, p) in spec.providers.iter().enumerate() {
            if p.command.first().is_none_or(|c| c.is_empty()) {
                errs.push(FieldError::new(format!("providers[{i}].command"), "command is empty"));
            }
        }
        if spec.batch_size == Some(0) {
            errs.push(FieldError::new("batch_size", "must be positive"));
        }
        if let Some(kind) = kind {
            let names = if spec.metrics.is_empty() { TaskSpec::new(kind).default_metrics } else { spec.metrics.clone() };
            for (i, m) in names.iter().enumerate() {
                if let Err(e) = resolve_metrics(&self.registry, kind, std::slice::from_ref(m)) {
                    errs.push(FieldError::new(format!("metrics[{i}]"), e.to_string()));
                }
            }
        }
        errs
    }

    /// Validates and queues a job. An identical spec over identical dataset
    /// content returns the earlier job unless `force` is set.
    pub fn submit(&self, mut spec: JobSpec, force: bool) -> ServiceResult<Submitted> {
        let errs = self.validate(&spec);
        if !errs.is_empty() {
            return Err(ServiceError::InvalidSpec(errs));
        }
        let unreadable = |reason: String| ServiceError::DatasetUnreadable { path: spec.dataset.clone(), reason };
        let abs = std::fs::canonicalize(&spec.dataset).map_err(|e| unreadable(e.to_string()))?;
        let data = crate::evaluator::Dataset::read(&abs).map_err(|e| unreadable(e.to_string()))?;
        if data.is_empty() {
            return Err(unreadable("dataset has no rows".into()));
        }
        spec.dataset = abs.display().to_string();
        let pin = DatasetPin { path: spec.dataset.clone(), sha256: Some(data.reference.sha256.clone()) };
        let spec_value = serde_json::to_value(&spec).expect("spec serializes");
        let key = sha256_hex(format!("{}\n{}", canonical_json(&spec_value), data.reference.sha256).as_bytes());
        let id = self.next_id();
        let (id, created) = self.store().insert_job(&id, (!force).then_some(key.as_str()), &spec, &pin)?;
        Ok(Submitted { job: self.job(&id)?, created })
    }

    pub fn job(&self, id: &str) -> ServiceResult<EvaluationJob> {
        self.store().get_job(id)?.ok_or_else(|| ServiceError::NotFound { kind: "job", id: id.to_string() })
    }

    pub fn jobs(&self, state: Option<JobState>) -> ServiceResult<Vec<EvaluationJob>> {
        self.store().list_jobs(state)
    }

    /// A proposal with its full evaluation report when one was stored.
    pub fn proposal(&self, id: &str) -> ServiceResult<ResultProposal> {
        let store = self.store();
        let mut p =
            store.get_proposal(id)?.ok_or_else(|| ServiceError::NotFound { kind: "proposal", id: id.to_string() })?;
        if let Some(hash) = &p.report_blob {
            let bytes = store.get_blob(hash)?;
            p.report = Some(serde_json::from_slice(&bytes).map_err(|e| crate::Error::json("stored report", e))?);
        }
        Ok(p)
    }

    pub fn proposals(&self, model: Option<&str>) -> ServiceResult<Vec<ResultProposal>> {
        self.store().proposals(model)
    }

    /// Path of a stored blob, for reading predictions artifacts.
    pub fn blob_path(&self, hash: &str) -> PathBuf {
        self.store().blob_path(hash)
    }

    /// Approves or closes a proposal on behalf of the model owner.
    pub fn review(&self, id: &str, decision: Decision, token: &str) -> ServiceResult<ResultProposal> {
        let p = {
            let store = self.store();
            store.get_proposal(id)?.ok_or_else(|| ServiceError::NotFound { kind: "proposal", id: id.to_string() })?
        };
        if !self.owners.authorizes(&p.model, token) {
            return Err(ServiceError::Unauthorized { model: p.model });
        }
        let already = || ServiceError::AlreadyDecided { id: id.to_string(), state: p.state.as_str().to_string() };
        let next = p.state.decide(decision).ok_or_else(already)?;
        if !self.store().set_approval(id, ApprovalState::Proposed, next)? {
            let now = self.store().get_proposal(id)?.map_or(p.state, |q| q.state);
            return Err(ServiceError::AlreadyDecided { id: id.to_string(), state: now.as_str().to_string() });
        }
        self.proposal(id)
    }

    /// Records an externally produced result as an unverified proposal.
    pub fn import_self_reported(&self, r: SelfReported) -> ServiceResult<ResultProposal> {
        let known = self.registry.output_spec(&r.metric).is_some_and(|o| o.kind == evalkit_core::ScoreKind::Scalar);
        if !known {
            return Err(ServiceError::UnknownMetric { metric: r.metric });
        }
        if !r.value.is_finite() {
            return Err(ServiceError::InvalidValue(format!("{} is not a finite number", r.value)));
        }
        if r.model.trim().is_empty() {
            return Err(ServiceError::InvalidValue("model name is empty".into()));
        }
        if let Some(task) = &r.task {
            TaskKind::parse(task).map_err(|e| ServiceError::InvalidValue(e.to_string()))?;
        }
        let p = ResultProposal {
            id: self.next_id(),
            job_id: None,
            model: r.model,
            dataset: DatasetPin { path: dataset_key(&r.dataset.path), sha256: r.dataset.sha256 },
            task: r.task,
            state: ApprovalState::Proposed,
            verified: false,
            metrics: [(r.metric, r.value)].into_iter().collect(),
            report: None,
            report_blob: None,
            predictions_blob: None,
            source_note: r.source,
            created_at: now_ms(),
            decided_at: None,
        };
        self.store().insert_proposal(&p)?;
        self.proposal(&p.id)
    }

    /// Ranked entries for one dataset and metric. Closed proposals are left out
    /// unless asked for; they stay readable through [`Service::proposal`].
    pub fn leaderboard(&self, q: &LeaderboardQuery) -> ServiceResult<Vec<LeaderboardEntry>> {
        let higher = self
            .registry
            .output_spec(&q.metric)
            .and_then(|o| o.higher_is_better)
            .ok_or_else(|| ServiceError::UnknownMetricDirection { metric: q.metric.clone() })?;
        let dataset = dataset_key(&q.dataset);
        let entries = self
            .proposals(None)?
            .into_iter()
            .filter(|p| p.dataset.matches(&dataset))
            .filter(|p| q.task.is_none() || p.task == q.task)
            .filter(|p| q.verified.is_none_or(|v| p.verified == v))
            .filter(|p| q.include_closed || p.state != ApprovalState::Closed)
            .filter_map(|p| {
                let value = *p.metrics.get(&q.metric)?;
                Some(LeaderboardEntry {
                    rank: 0,
                    model: p.model,
                    dataset: p.dataset,
                    task: p.task,
                    metric: q.metric.clone(),
                    value,
                    verified: p.verified,
                    state: p.state,
                    proposal_id: p.id,
                })
            })
            .collect();
        Ok(leaderboard::rank(entries, higher))
    }

    /// Approved results of one model, shaped for a model card's metadata block.
    pub fn model_card_metadata(&self, model: &str) -> ServiceResult<Value> {
        let results: Vec<Value> = self
            .proposals(Some(model))?
            .into_iter()
            .filter(|p| p.state == ApprovalState::Approved)
            .map(|p| {
                let metrics: Vec<Value> = p
                    .metrics
                    .iter()
                    .map(|(k, v)| json!({ "type": k, "value": v, "verified": p.verified }))
                    .collect();
                json!({
                    "task": { "type": p.task },
                    "dataset": { "name": p.dataset.path, "revision": p.dataset.sha256 },
                    "metrics": metrics,
                    "source": { "proposal": p.id, "job": p.job_id, "note": p.source_note },
                })
            })
            .collect();
        Ok(json!({ "model-index": [{ "name": model, "results": results }] }))
    }

    /// Releases jobs left running by a dead worker pool.
    pub fn recover(&self) -> ServiceResult<(usize, usize)> {
        self.store().recover(&self.instance)
    }

    /// Claims and runs jobs until none is left; returns how many were processed.
    pub fn run_until_idle(&self) -> ServiceResult<usize> {
        self.recover()?;
        let mut store = Store::open(&self.root)?;
        let mut n = 0;
        while self.run_one(&mut store)? {
            n += 1;
        }
        Ok(n)
    }

    /// Starts `n` worker threads that poll until `stop` is set. Each returns
    /// the number of jobs it processed.
    pub fn spawn_workers(self: &Arc<Self>, n: usize, stop: Arc<AtomicBool>) -> ServiceResult<Vec<JoinHandle<usize>>> {
        self.recover()?;
        (0..n.max(1))
            .map(|_| {
                let svc = Arc::clone(self);
                let stop = Arc::clone(&stop);
                let mut store = Store::open(&self.root)?;
                Ok(std::thread::spawn(move || {
                    let mut processed = 0;
                    while !stop.load(Ordering::Relaxed) {
                        match svc.run_one(&mut store) {
                            Ok(true) => processed += 1,
                            Ok(false) => std::thread::sleep(svc.poll),
                            Err(e) => {
                                eprintln!("evalkit worker: {e}");
                                std::thread::sleep(svc.poll);
                            }
                        }
                    }
                    processed
                }))
            })
            .collect()
    }

    fn run_one(&self, store: &mut Store) -> ServiceResult<bool> {
        let Some(job) = store.claim(&self.instance)? else {
            return Ok(false);
        };
        match self.execute(store, &job) {
            Ok(proposals) => store.succeed(&job.id, &self.instance, &proposals)?,
            Err(reason) => store.fail(&job.id, &self.instance, &reason)?,
        };
        Ok(true)
    }

    /// Runs every provider of a job. Any failure fails the whole job.
    fn execute(&self, store: &Store, job: &ClaimedJob) -> Result<Vec<ResultProposal>, String> {
        let spec = &job.spec;
        let pinned = job.dataset.sha256.clone().unwrap_or_default();
        let path = PathBuf::from(&job.dataset.path);
        let current = file_sha256(&path).map_err(|e| e.to_string())?;
        if current != pinned {
            return Err(format!("dataset content changed since submission: pinned {pinned}, found {current}"));
        }
        let mut task = TaskSpec::by_id(&spec.task).map_err(|e| e.to_string())?;
        if let Some(cols) = &spec.input_columns {
            task.input_columns = cols.clone();
        }
        if let Some(col) = &spec.reference_column {
            task.reference_column = col.clone();
        }
        let scratch = tempfile::tempdir().map_err(|e| format!("cannot create scratch directory: {e}"))?;
        let mut out: Vec<ResultProposal> = Vec::new();
        for (i, provider) in spec.providers.iter().enumerate() {
            let mut opts = EvalOptions::new(scratch.path().join(i.to_string()));
            opts.batch_size = spec.batch_size.unwrap_or(opts.batch_size);
            opts.ci = spec.ci;
            opts.metric_params = spec.metric_params.clone();
            let mut p = SubprocessProvider::spawn(&provider.command).map_err(|e| e.to_string())?;
            let mut report = evaluate_task(&self.registry, &task, &path, &mut p, &spec.metrics, &opts)
                .map_err(|e| format!("provider {}: {e}", provider.command.join(" ")))?;
            if report.dataset.sha256 != pinned {
                return Err(format!("dataset content changed during the run: pinned {pinned}, read {}", report.dataset.sha256));
            }
            if out.iter().any(|q| q.model == report.provider.model) {
                return Err(format!("two providers declared the model name `{}`", report.provider.model));
            }
            let predictions = std::fs::read(&report.predictions_path).map_err(|e| e.to_string())?;
            let predictions_blob = store.put_blob(&predictions).map_err(|e| e.to_string())?;
            report.predictions_path = store.blob_path(&predictions_blob);
            let report_json = serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?;
            let report_blob = store.put_blob(&report_json).map_err(|e| e.to_string())?;
            out.push(ResultProposal {
                id: self.next_id(),
                job_id: Some(job.id.clone()),
                model: report.provider.model.clone(),
                dataset: job.dataset.clone(),
                task: Some(spec.task.clone()),
                state: ApprovalState::Proposed,
                verified: true,
                metrics: scalar_metrics(&report),
                report: None,
                report_blob: Some(report_blob),
                predictions_blob: Some(predictions_blob),
                source_note: None,
                created_at: now_ms(),
                decided_at: None,
            });
        }
        Ok(out)
    }
}

/// Scalar outputs of every metric keyed by output name; a name produced by
/// two metrics is prefixed with the metric id.
pub fn scalar_metrics(report: &EvaluationReport) -> BTreeMap<String, f64> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &report.metrics {
        for k in m.values.keys() {
            *seen.entry(k.as_str()).or_default() += 1;
        }
    }
    let mut out = BTreeMap::new();
    for m in &report.metrics {
        for (k, v) in &m.values {
            if let Some(x) = v.as_scalar() {
                let key = if seen[k.as_str()] > 1 { format!("{}_{k}", m.module_id) } else { k.clone() };
                out.insert(key, x);
            }
        }
    }
    out
}

/// Service data directory from `EVALKIT_SERVICE_DIR`, defaulting to `./evalkit-service`.
pub fn default_service_dir() -> PathBuf {
    std::env::var_os(ENV_SERVICE_DIR).filter(|d| !d.is_empty()).map_or_else(|| PathBuf::from("evalkit-service"), PathBuf::from)
}

/// Names of existing local files become canonical paths so they match the
/// paths recorded at submission; anything else is kept as given.
fn dataset_key(name: &str) -> String {
    match std::fs::canonicalize(name) {
        Ok(p) if p.is_file() => p.display().to_string(),
        _ => name.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn service(dir: &Path) -> Service {
        let mut owners = OwnerTable::default();
        owners.add("acme/", "t-acme");
        Service::open(dir.join("svc"), Registry::default(), owners).unwrap()
    }

    fn dataset(dir: &Path) -> String {
        let p = dir.join("d.jsonl");
        std::fs::write(&p, "{\"text\":\"a\",\"label\":1}\n{\"text\":\"b\",\"label\":0}\n").unwrap();
        p.display().to_string()
    }

    fn spec(data: &str, metrics: &[&str]) -> JobSpec {
        JobSpec {
            task: "text-classification".into(),
            dataset: data.into(),
            providers: vec![ProviderSpec { command: vec!["sh".into(), "-c".into(), "exit 1".into()] }],
            metrics: metrics.iter().map(|s| s.to_string()).collect(),
            input_columns: None,
            reference_column: None,
            batch_size: None,
            ci: None,
            metric_params: BTreeMap::new(),
        }
    }

    #[test]
    fn submit_validates_and_dedupes() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let data = dataset(d.path());
        let a = svc.submit(spec(&data, &["accuracy"]), false).unwrap();
        assert!(a.created);
        assert_eq!(a.job.id.len(), 26);
        assert_eq!(a.job.state, JobState::Queued);
        let b = svc.submit(spec(&data, &["accuracy"]), false).unwrap();
        assert_eq!((b.job.id.as_str(), b.created), (a.job.id.as_str(), false));
        let c = svc.submit(spec(&data, &["accuracy"]), true).unwrap();
        assert_ne!(c.job.id, a.job.id);
        // New content means a new job even for the same spec.
        std::fs::write(&data, "{\"text\":\"a\",\"label\":1}\n").unwrap();
        assert!(svc.submit(spec(&data, &["accuracy"]), false).unwrap().created);

        match svc.submit(spec(&data, &["accuracy", "no_such_metric"]), false) {
            Err(ServiceError::InvalidSpec(f)) => {
                assert_eq!(f.len(), 1);
                assert_eq!(f[0].field, "metrics[1]");
                assert!(f[0].message.contains("no_such_metric"));
            }
            other => panic!("{other:?}"),
        }
        let missing = spec(&d.path().join("nope.jsonl").display().to_string(), &[]);
        assert!(matches!(svc.submit(missing, false), Err(ServiceError::DatasetUnreadable { .. })));
    }

    #[test]
    fn failing_provider_fails_the_job() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let data = dataset(d.path());
        let mut s = spec(&data, &[]);
        s.providers[0].command = vec!["sh".into(), "-c".into(), "echo 'no GPU available' >&2; exit 4".into()];
        let job = svc.submit(s, false).unwrap().job;
        assert_eq!(svc.run_until_idle().unwrap(), 1);
        let job = svc.job(&job.id).unwrap();
        assert_eq!(job.state, JobState::Failed);
        assert!(job.failure.unwrap().contains("no GPU available"));
        assert!(job.proposals.is_empty());
    }

    #[test]
    fn self_reported_flow() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let pin = DatasetPin { path: "imdb".into(), sha256: None };
        let rep = |metric: &str, value: f64| SelfReported {
            model: "acme/bert".into(),
            dataset: pin.clone(),
            task: None,
            metric: metric.into(),
            value,
            source: Some("vendor blog".into()),
        };
        assert!(matches!(svc.import_self_reported(rep("accuracy", f64::NAN)), Err(ServiceError::InvalidValue(_))));
        assert!(matches!(svc.import_self_reported(rep("acc", 0.8)), Err(ServiceError::UnknownMetric { .. })));
        let p = svc.import_self_reported(rep("accuracy", 0.88)).unwrap();
        assert!(!p.verified);
        assert_eq!(p.state, ApprovalState::Proposed);

        assert!(matches!(svc.review(&p.id, Decision::Approve, "wrong"), Err(ServiceError::Unauthorized { .. })));
        assert_eq!(svc.proposal(&p.id).unwrap().state, ApprovalState::Proposed);
        assert_eq!(svc.review(&p.id, Decision::Approve, "t-acme").unwrap().state, ApprovalState::Approved);
        assert!(matches!(svc.review(&p.id, Decision::Close, "t-acme"), Err(ServiceError::AlreadyDecided { .. })));
        assert!(matches!(svc.review("nope", Decision::Close, "t-acme"), Err(ServiceError::NotFound { .. })));

        let q = LeaderboardQuery { dataset: "imdb".into(), metric: "accuracy".into(), ..Default::default() };
        let board = svc.leaderboard(&q).unwrap();
        assert_eq!(board.len(), 1);
        assert!(!board[0].verified);
        assert_eq!(board[0].state, ApprovalState::Approved);

        let card = svc.model_card_metadata("acme/bert").unwrap();
        assert_eq!(card["model-index"][0]["results"][0]["metrics"][0]["value"], 0.88);
        assert_eq!(svc.model_card_metadata("other").unwrap()["model-index"][0]["results"], json!([]));
    }

    #[test]
    fn leaderboard_requires_a_direction() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let q = |m: &str| LeaderboardQuery { dataset: "x".into(), metric: m.into(), ..Default::default() };
        assert_eq!(svc.leaderboard(&q("accuracy")).unwrap(), []);
        assert!(matches!(svc.leaderboard(&q("p_value")), Err(ServiceError::UnknownMetricDirection { .. })));
        assert!(matches!(svc.leaderboard(&q("nonsense")), Err(ServiceError::UnknownMetricDirection { .. })));
    }

    #[test]
    fn owner_prefixes() {
        let mut t = OwnerTable::default();
        t.add("acme/", "a");
        t.add("", "root");
        assert!(t.authorizes("acme/x", "a"));
        assert!(!t.authorizes("other/x", "a"));
        assert!(t.authorizes("other/x", "root"));
        assert!(!t.authorizes("acme/x", ""));
        let parsed: OwnerTable = toml::from_str("[[owner]]\nprefix = \"acme/\"\ntoken = \"a\"\n").unwrap();
        assert!(parsed.authorizes("acme/y", "a"));
    }
}
