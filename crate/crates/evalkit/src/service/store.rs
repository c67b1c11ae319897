//! Persistence: one SQLite file for jobs and proposals plus a directory of
//! blobs named by the SHA-256 of their content.
//!
//! Every state change runs inside a transaction. Jobs are claimed in
//! submission order under `BEGIN IMMEDIATE`, so two connections never claim
//! the same job. A running job carries the lease of the worker pool that
//! claimed it; [`Store::recover`] releases leases of dead pools.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rusqlite::{params, Connection, OptionalExtension, Row, TransactionBehavior};

use super::error::{ServiceError, ServiceResult};
use super::types::{ApprovalState, DatasetPin, EvaluationJob, JobEvent, JobSpec, JobState, ResultProposal};
use crate::error::Error;
use crate::evaluator::dataset::sha256_hex;

pub const DB_FILE: &str = "evalkit.db";
pub const BLOB_DIR: &str = "blobs";

/// Jobs taken over after a dead worker at most this many times.
pub const MAX_RECOVERIES: u32 = 1;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS jobs (
    seq          INTEGER PRIMARY KEY AUTOINCREMENT,
    id           TEXT NOT NULL UNIQUE,
    idem_key     TEXT UNIQUE,
    spec_json    TEXT NOT NULL,
    dataset_path TEXT NOT NULL,
    dataset_hash TEXT NOT NULL,
    state        TEXT NOT NULL,
    lease        TEXT,
    recoveries   INTEGER NOT NULL DEFAULT 0,
    submitted_at INTEGER NOT NULL,
    started_at   INTEGER,
    finished_at  INTEGER,
    failure      TEXT
);
CREATE TABLE IF NOT EXISTS proposals (
    id               TEXT PRIMARY KEY,
    job_id           TEXT REFERENCES jobs(id),
    model            TEXT NOT NULL,
    task             TEXT,
    dataset_path     TEXT NOT NULL,
    dataset_hash     TEXT,
    state            TEXT NOT NULL,
    verified         INTEGER NOT NULL,
    metrics_json     TEXT NOT NULL,
    report_blob      TEXT,
    predictions_blob TEXT,
    source_note      TEXT,
    created_at       INTEGER NOT NULL,
    decided_at       INTEGER,
    UNIQUE (job_id, model)
);
CREATE INDEX IF NOT EXISTS proposals_model ON proposals(model);
";

/// A job handed to a worker.
#[derive(Debug, Clone)]
pub struct ClaimedJob {
    pub id: String,
    pub spec: JobSpec,
    pub dataset: DatasetPin,
    pub recoveries: u32,
}

pub struct Store {
    conn: Connection,
    blobs: PathBuf,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn corrupt(what: &str, detail: impl std::fmt::Display) -> rusqlite::Error {
    rusqlite::Error::InvalidColumnType(0, format!("{what}: {detail}"), rusqlite::types::Type::Text)
}

fn job_state(s: String) -> rusqlite::Result<JobState> {
    JobState::parse(&s).ok_or_else(|| corrupt("job state", s))
}

fn approval_state(s: String) -> rusqlite::Result<ApprovalState> {
    ApprovalState::parse(&s).ok_or_else(|| corrupt("approval state", s))
}

fn proposal_from_row(row: &Row) -> rusqlite::Result<ResultProposal> {
    let metrics: String = row.get("metrics_json")?;
    Ok(ResultProposal {
        id: row.get("id")?,
        job_id: row.get("job_id")?,
        model: row.get("model")?,
        dataset: DatasetPin { path: row.get("dataset_path")?, sha256: row.get("dataset_hash")? },
        task: row.get("task")?,
        state: approval_state(row.get("state")?)?,
        verified: row.get("verified")?,
        metrics: serde_json::from_str(&metrics).map_err(|e| corrupt("metrics", e))?,
        report: None,
        report_blob: row.get("report_blob")?,
        predictions_blob: row.get("predictions_blob")?,
        source_note: row.get("source_note")?,
        created_at: row.get::<_, i64>("created_at")? as u64,
        decided_at: row.get::<_, Option<i64>>("decided_at")?.map(|t| t as u64),
    })
}

impl Store {
    /// Opens or creates the store under `root`.
    pub fn open(root: &Path) -> ServiceResult<Store> {
        let blobs = root.join(BLOB_DIR);
        std::fs::create_dir_all(&blobs).map_err(|e| Error::io(format!("cannot create {}", blobs.display()), e))?;
        let conn = Connection::open(root.join(DB_FILE))?;
        conn.busy_timeout(Duration::from_secs(30))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn, blobs })
    }

    pub fn blob_path(&self, hash: &str) -> PathBuf {
        self.blobs.join(&hash[..2]).join(hash)
    }

    /// Stores `bytes` once under their SHA-256 and returns the hash.
    pub fn put_blob(&self, bytes: &[u8]) -> ServiceResult<String> {
        let hash = sha256_hex(bytes);
        let path = self.blob_path(&hash);
        if path.exists() {
            return Ok(hash);
        }
        let dir = path.parent().expect("blob has a parent");
        let io = |e| Error::io(format!("cannot write blob into {}", dir.display()), e);
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_data().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(hash)
    }

    pub fn get_blob(&self, hash: &str) -> ServiceResult<Vec<u8>> {
        let path = self.blob_path(hash);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(format!("cannot read blob {}", path.display()), e))?;
        let found = sha256_hex(&bytes);
        if found != hash {
            return Err(Error::CorruptBlob { path, found }.into());
        }
        Ok(bytes)
    }

    /// Inserts a queued job unless `idem_key` names an existing one.
    /// Returns the job id and whether it was newly created.
    pub fn insert_job(
        &mut self,
        id: &str,
        idem_key: Option<&str>,
        spec: &JobSpec,
        dataset: &DatasetPin,
    ) -> ServiceResult<(String, bool)> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        if let Some(key) = idem_key {
            let existing: Option<String> =
                tx.query_row("SELECT id FROM jobs WHERE idem_key = ?1", [key], |r| r.get(0)).optional()?;
            if let Some(existing) = existing {
                return Ok((existing, false));
            }
        }
        let spec_json = serde_json::to_string(spec).map_err(|e| Error::json("job spec", e))?;
        tx.execute(
            "INSERT INTO jobs (id, idem_key, spec_json, dataset_path, dataset_hash, state, submitted_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                id,
                idem_key,
                spec_json,
                dataset.path,
                dataset.sha256.as_deref().unwrap_or_default(),
                JobState::Queued.as_str(),
                now_ms() as i64
            ],
        )?;
        tx.commit()?;
        Ok((id.to_string(), true))
    }

    fn job_from_row(&self, row: &Row) -> rusqlite::Result<EvaluationJob> {
        let spec: String = row.get("spec_json")?;
        let id: String = row.get("id")?;
        Ok(EvaluationJob {
            spec: serde_json::from_str(&spec).map_err(|e| corrupt("job spec", e))?,
            dataset: DatasetPin { path: row.get("dataset_path")?, sha256: Some(row.get("dataset_hash")?) },
            state: job_state(row.get("state")?)?,
            submitted_at: row.get::<_, i64>("submitted_at")? as u64,
            started_at: row.get::<_, Option<i64>>("started_at")?.map(|t| t as u64),
            finished_at: row.get::<_, Option<i64>>("finished_at")?.map(|t| t as u64),
            failure: row.get("failure")?,
            recoveries: row.get("recoveries")?,
            proposals: Vec::new(),
            id,
        })
    }

    fn with_proposals(&self, mut job: EvaluationJob) -> ServiceResult<EvaluationJob> {
        let mut stmt = self.conn.prepare_cached("SELECT id FROM proposals WHERE job_id = ?1 ORDER BY id")?;
        job.proposals = stmt.query_map([&job.id], |r| r.get(0))?.collect::<rusqlite::Result<_>>()?;
        Ok(job)
    }

    pub fn get_job(&self, id: &str) -> ServiceResult<Option<EvaluationJob>> {
        let job = self
            .conn
            .query_row("SELECT * FROM jobs WHERE id = ?1", [id], |r| self.job_from_row(r))
            .optional()?;
        job.map(|j| self.with_proposals(j)).transpose()
    }

    /// Jobs in submission order, optionally restricted to one state.
    pub fn list_jobs(&self, state: Option<JobState>) -> ServiceResult<Vec<EvaluationJob>> {
        let mut stmt =
            self.conn.prepare("SELECT * FROM jobs WHERE ?1 IS NULL OR state = ?1 ORDER BY seq")?;
        let jobs = stmt
            .query_map([state.map(JobState::as_str)], |r| self.job_from_row(r))?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        jobs.into_iter().map(|j| self.with_proposals(j)).collect()
    }

    /// Takes the oldest job that is queued or was released by [`Store::recover`].
    pub fn claim(&mut self, lease: &str) -> ServiceResult<Option<ClaimedJob>> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let next = tx
            .query_row(
                "SELECT id, state, spec_json, dataset_path, dataset_hash, recoveries FROM jobs
                 WHERE state = 'queued' OR (state = 'running' AND lease IS NULL)
                 ORDER BY seq LIMIT 1",
                [],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        job_state(r.get(1)?)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, String>(3)?,
                        r.get::<_, String>(4)?,
                        r.get::<_, u32>(5)?,
                    ))
                },
            )
            .optional()?;
        let Some((id, state, spec_json, path, hash, recoveries)) = next else {
            return Ok(None);
        };
        let event = if state == JobState::Queued { JobEvent::Claim } else { JobEvent::Reclaim };
        let next_state = state.apply(event).map_err(|t| corrupt("job transition", format!("{t:?}")))?;
        tx.execute(
            "UPDATE jobs SET state = ?2, lease = ?3, started_at = ?4 WHERE id = ?1",
            params![id, next_state.as_str(), lease, now_ms() as i64],
        )?;
        tx.commit()?;
        Ok(Some(ClaimedJob {
            spec: serde_json::from_str(&spec_json).map_err(|e| corrupt("job spec", e))?,
            dataset: DatasetPin { path, sha256: Some(hash) },
            id,
            recoveries,
        }))
    }

    /// Moves a job this lease holds to a terminal state; proposals are written
    /// in the same transaction. A lost lease makes this a no-op returning false.
    fn finish(
        &mut self,
        id: &str,
        lease: &str,
        event: JobEvent,
        failure: Option<&str>,
        proposals: &[ResultProposal],
    ) -> ServiceResult<bool> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let current: Option<(String, Option<String>)> = tx
            .query_row("SELECT state, lease FROM jobs WHERE id = ?1", [id], |r| Ok((r.get(0)?, r.get(1)?)))
            .optional()?;
        let Some((state, held)) = current else {
            return Err(ServiceError::NotFound { kind: "job", id: id.to_string() });
        };
        if held.as_deref() != Some(lease) {
            return Ok(false);
        }
        let next = job_state(state)?.apply(event).map_err(|t| corrupt("job transition", format!("{t:?}")))?;
        for p in proposals {
            insert_proposal(&tx, p)?;
        }
        tx.execute(
            "UPDATE jobs SET state = ?2, finished_at = ?3, failure = ?4, lease = NULL WHERE id = ?1",
            params![id, next.as_str(), now_ms() as i64, failure],
        )?;
        tx.commit()?;
        Ok(true)
    }

    pub fn succeed(&mut self, id: &str, lease: &str, proposals: &[ResultProposal]) -> ServiceResult<bool> {
        self.finish(id, lease, JobEvent::Succeed, None, proposals)
    }

    pub fn fail(&mut self, id: &str, lease: &str, reason: &str) -> ServiceResult<bool> {
        self.finish(id, lease, JobEvent::Fail, Some(reason), &[])
    }

    /// Releases running jobs held by any lease other than `live`. A job is
    /// released once; a job whose worker died again is failed.
    /// Returns (released, failed).
    pub fn recover(&mut self, live: &str) -> ServiceResult<(usize, usize)> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let failed = tx.execute(
            "UPDATE jobs SET state = 'failed', lease = NULL, finished_at = ?3,
                 failure = 'worker died while running the job, after it had already been recovered once'
             WHERE state = 'running' AND lease IS NOT NULL AND lease != ?1 AND recoveries >= ?2",
            params![live, MAX_RECOVERIES, now_ms() as i64],
        )?;
        let released = tx.execute(
            "UPDATE jobs SET lease = NULL, recoveries = recoveries + 1
             WHERE state = 'running' AND lease IS NOT NULL AND lease != ?1 AND recoveries < ?2",
            params![live, MAX_RECOVERIES],
        )?;
        tx.commit()?;
        Ok((released, failed))
    }

    pub fn insert_proposal(&mut self, p: &ResultProposal) -> ServiceResult<()> {
        insert_proposal(&self.conn, p)?;
        Ok(())
    }

    pub fn get_proposal(&self, id: &str) -> ServiceResult<Option<ResultProposal>> {
        Ok(self.conn.query_row("SELECT * FROM proposals WHERE id = ?1", [id], proposal_from_row).optional()?)
    }

    /// Applies a decision if the proposal is still in `from`; false when it is not.
    pub fn set_approval(&mut self, id: &str, from: ApprovalState, to: ApprovalState) -> ServiceResult<bool> {
        let n = self.conn.execute(
            "UPDATE proposals SET state = ?3, decided_at = ?4 WHERE id = ?1 AND state = ?2",
            params![id, from.as_str(), to.as_str(), now_ms() as i64],
        )?;
        Ok(n == 1)
    }

    /// All proposals, optionally for one model, ordered by id.
    pub fn proposals(&self, model: Option<&str>) -> ServiceResult<Vec<ResultProposal>> {
        let mut stmt = self.conn.prepare("SELECT * FROM proposals WHERE ?1 IS NULL OR model = ?1 ORDER BY id")?;
        let rows = stmt.query_map([model], proposal_from_row)?.collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(rows)
    }

    /// Number of jobs per state.
    pub fn job_counts(&self) -> ServiceResult<BTreeMap<String, usize>> {
        let mut stmt = self.conn.prepare("SELECT state, COUNT(*) FROM jobs GROUP BY state")?;
        let rows = stmt.query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, usize>(1)?)))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }
}

/// Idempotent per (job, model): a retried job never duplicates results.
fn insert_proposal(conn: &Connection, p: &ResultProposal) -> rusqlite::Result<usize> {
    let metrics = serde_json::to_string(&p.metrics).map_err(|e| corrupt("metrics", e))?;
    conn.execute(
        "INSERT OR IGNORE INTO proposals
           (id, job_id, model, task, dataset_path, dataset_hash, state, verified, metrics_json,
            report_blob, predictions_blob, source_note, created_at, decided_at)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14)",
        params![
            p.id,
            p.job_id,
            p.model,
            p.task,
            p.dataset.path,
            p.dataset.sha256,
            p.state.as_str(),
            p.verified,
            metrics,
            p.report_blob,
            p.predictions_blob,
            p.source_note,
            p.created_at as i64,
            p.decided_at.map(|t| t as i64),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::types::ProviderSpec;

    fn spec() -> JobSpec {
        JobSpec {
            task: "text-classification".into(),
            dataset: "/data.jsonl".into(),
            providers: vec![ProviderSpec { command: vec!["p".into()] }],
            metrics: vec![],
            input_columns: None,
            reference_column: None,
            batch_size: None,
            ci: None,
            metric_params: BTreeMap::new(),
        }
    }

    fn pin() -> DatasetPin {
        DatasetPin { path: "/data.jsonl".into(), sha256: Some("ab".repeat(32)) }
    }

    fn proposal(id: &str, job: &str, model: &str) -> ResultProposal {
        ResultProposal {
            id: id.into(),
            job_id: Some(job.into()),
            model: model.into(),
            dataset: pin(),
            task: Some("text-classification".into()),
            state: ApprovalState::Proposed,
            verified: true,
            metrics: [("accuracy".to_string(), 0.75)].into_iter().collect(),
            report: None,
            report_blob: None,
            predictions_blob: None,
            source_note: None,
            created_at: 1,
            decided_at: None,
        }
    }

    #[test]
    fn idempotent_insert_and_fifo_claim() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        assert_eq!(s.insert_job("J1", Some("k1"), &spec(), &pin()).unwrap(), ("J1".into(), true));
        assert_eq!(s.insert_job("J2", Some("k1"), &spec(), &pin()).unwrap(), ("J1".into(), false));
        assert!(s.insert_job("J3", None, &spec(), &pin()).unwrap().1);
        assert!(s.insert_job("J4", None, &spec(), &pin()).unwrap().1);
        assert_eq!(s.claim("L").unwrap().unwrap().id, "J1");
        assert_eq!(s.claim("L").unwrap().unwrap().id, "J3");
        assert!(s.succeed("J1", "L", &[proposal("P1", "J1", "m")]).unwrap());
        // Retrying with the same (job, model) does not add a second proposal.
        insert_proposal(&s.conn, &proposal("P2", "J1", "m")).unwrap();
        let job = s.get_job("J1").unwrap().unwrap();
        assert_eq!(job.state, JobState::Succeeded);
        assert_eq!(job.proposals, ["P1"]);
        assert_eq!(s.list_jobs(Some(JobState::Queued)).unwrap().len(), 1);
    }

    #[test]
    fn two_connections_never_claim_the_same_job() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        for i in 0..20 {
            s.insert_job(&format!("J{i:02}"), None, &spec(), &pin()).unwrap();
        }
        let root = d.path().to_path_buf();
        let handles: Vec<_> = (0..4)
            .map(|w| {
                let root = root.clone();
                std::thread::spawn(move || {
                    let mut s = Store::open(&root).unwrap();
                    let mut got = Vec::new();
                    while let Some(j) = s.claim(&format!("W{w}")).unwrap() {
                        got.push(j.id);
                    }
                    got
                })
            })
            .collect();
        let mut all: Vec<String> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        all.sort();
        let want: Vec<String> = (0..20).map(|i| format!("J{i:02}")).collect();
        assert_eq!(all, want);
    }

    #[test]
    fn recovery_releases_once_then_fails() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        s.insert_job("J1", None, &spec(), &pin()).unwrap();
        s.claim("dead-1").unwrap().unwrap();
        // The live pool does not release its own jobs.
        assert_eq!(s.recover("dead-1").unwrap(), (0, 0));
        assert_eq!(s.recover("pool-2").unwrap(), (1, 0));
        let again = s.claim("pool-2").unwrap().unwrap();
        assert_eq!((again.id.as_str(), again.recoveries), ("J1", 1));
        assert_eq!(s.get_job("J1").unwrap().unwrap().state, JobState::Running);
        // The old lease can no longer finish the job.
        assert!(!s.succeed("J1", "dead-1", &[]).unwrap());
        assert_eq!(s.recover("pool-3").unwrap(), (0, 1));
        let job = s.get_job("J1").unwrap().unwrap();
        assert_eq!(job.state, JobState::Failed);
        assert!(job.failure.unwrap().contains("recovered once"));
    }

    #[test]
    fn approval_is_compare_and_set() {
        let d = tempfile::tempdir().unwrap();
        let mut s = Store::open(d.path()).unwrap();
        s.insert_job("J1", None, &spec(), &pin()).unwrap();
        s.insert_proposal(&proposal("P1", "J1", "m")).unwrap();
        assert!(s.set_approval("P1", ApprovalState::Proposed, ApprovalState::Closed).unwrap());
        assert!(!s.set_approval("P1", ApprovalState::Proposed, ApprovalState::Approved).unwrap());
        let p = s.get_proposal("P1").unwrap().unwrap();
        assert_eq!(p.state, ApprovalState::Closed);
        assert!(p.decided_at.is_some());
        assert_eq!(p.metrics["accuracy"], 0.75);
    }

    #[test]
    fn blobs_are_content_addressed_and_checked() {
        let d = tempfile::tempdir().unwrap();
        let s = Store::open(d.path()).unwrap();
        let h = s.put_blob(b"hello").unwrap();
        assert_eq!(h, sha256_hex(b"hello"));
        assert_eq!(s.put_blob(b"hello").unwrap(), h);
        assert_eq!(s.get_blob(&h).unwrap(), b"hello");
        std::fs::write(s.blob_path(&h), b"hellO").unwrap();
        assert!(matches!(s.get_blob(&h), Err(ServiceError::Internal(Error::CorruptBlob { .. }))));
    }
}
