//! Records exchanged with the service and their state machines.

use std::collections::BTreeMap;

use evalkit_core::Params;
use serde::{Deserialize, Serialize};

use crate::evaluator::{CiOptions, EvaluationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

/// What can happen to a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobEvent {
    /// A worker takes a queued job.
    Claim,
    /// A worker takes over a running job whose previous worker died.
    Reclaim,
    Succeed,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvalidTransition {
    pub from: JobState,
    pub event: JobEvent,
}

impl JobState {
    /// The only legal moves are queued→running→{succeeded, failed}. A reclaim
    /// keeps a running job running, so no state is ever skipped or revisited.
    pub fn apply(self, event: JobEvent) -> Result<JobState, InvalidTransition> {
        use JobEvent::*;
        use JobState::*;
        match (self, event) {
            (Queued, Claim) => Ok(Running),
            (Running, Reclaim) => Ok(Running),
            (Running, Succeed) => Ok(Succeeded),
            (Running, Fail) => Ok(Failed),
            (from, event) => Err(InvalidTransition { from, event }),
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Succeeded => "succeeded",
            JobState::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<JobState> {
        [JobState::Queued, JobState::Running, JobState::Succeeded, JobState::Failed].into_iter().find(|j| j.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApprovalState {
    Proposed,
    Approved,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Close,
}

impl ApprovalState {
    /// A proposal is decided exactly once.
    pub fn decide(self, decision: Decision) -> Option<ApprovalState> {
        match (self, decision) {
            (ApprovalState::Proposed, Decision::Approve) => Some(ApprovalState::Approved),
            (ApprovalState::Proposed, Decision::Close) => Some(ApprovalState::Closed),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ApprovalState::Proposed => "proposed",
            ApprovalState::Approved => "approved",
            ApprovalState::Closed => "closed",
        }
    }

    pub fn parse(s: &str) -> Option<ApprovalState> {
        [ApprovalState::Proposed, ApprovalState::Approved, ApprovalState::Closed].into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub command: Vec<String>,
}

/// What to evaluate: one task and dataset, one or more providers, a list of metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub task: String,
    /// Path of a JSON-lines dataset; stored absolute.
    pub dataset: String,
    pub providers: Vec<ProviderSpec>,
    /// Empty means the task's default metrics.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<CiOptions>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_params: BTreeMap<String, Params>,
}

/// A dataset pinned by content: location plus SHA-256 when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPin {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl DatasetPin {
    /// Matches a query by location or by content hash.
    pub fn matches(&self, query: &str) -> bool {
        self.path == query || self.sha256.as_deref() == Some(query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationJob {
    pub id: String,
    pub spec: JobSpec,
    pub dataset: DatasetPin,
    pub state: JobState,
    /// Milliseconds since the Unix epoch.
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    pub failure: Option<String>,
    /// Times the job was taken over after its worker died.
    pub recoveries: u32,
    pub proposals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultProposal {
    pub id: String,
    /// None for imported self-reported results.
    pub job_id: Option<String>,
    pub model: String,
    pub dataset: DatasetPin,
    pub task: Option<String>,
    pub state: ApprovalState,
    /// True only for results produced by this service's own runner.
    pub verified: bool,
    /// Scalar metric values by output key.
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
    /// Content hash of the stored report blob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_blob: Option<String>,
    /// Content hash of the stored predictions artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions_blob: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_note: Option<String>,
    pub created_at: u64,
    pub decided_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// 1-based position; unique because the ordering is total.
    pub rank: usize,
    pub model: String,
    pub dataset: DatasetPin,
    pub task: Option<String>,
    pub metric: String,
    pub value: f64,
    pub verified: bool,
    pub state: ApprovalState,
    pub proposal_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardQuery {
    pub dataset: String,
    pub metric: String,
    #[serde(default)]
    pub task: Option<String>,
    /// Some(true) keeps only verified entries, Some(false) only self-reported ones.
    #[serde(default)]
    pub verified: Option<bool>,
    #[serde(default)]
    pub include_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfReported {
    pub model: String,
    pub dataset: DatasetPin,
    #[serde(default)]
    pub task: Option<String>,
    pub metric: String,
    pub value: f64,
    #[serde(default)]
    pub source: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn event() -> impl Strategy<Value = JobEvent> {
        prop_oneof![Just(JobEvent::Claim), Just(JobEvent::Reclaim), Just(JobEvent::Succeed), Just(JobEvent::Fail)]
    }

    fn order(s: JobState) -> u8 {
        match s {
            JobState::Queued => 0,
            JobState::Running => 1,
            JobState::Succeeded | JobState::Failed => 2,
        }
    }

    proptest! {
        /// Under any interleaving of events, accepted transitions never skip or
        /// reverse a stage, and terminal states absorb everything.
        #[test]
        fn job_states_only_move_forward(events in prop::collection::vec(event(), 0..40)) {
            let mut s = JobState::Queued;
            for e in events {
                match s.apply(e) {
                    Ok(next) => {
                        prop_assert!(!s.is_terminal());
                        let (a, b) = (order(s), order(next));
                        prop_assert!(b == a || b == a + 1);
                        prop_assert!(b != a || e == JobEvent::Reclaim);
                        s = next;
                    }
                    Err(err) => prop_assert_eq!(err.from, s),
                }
            }
        }
    }

    #[test]
    fn exhaustive_transition_table() {
        use JobEvent::*;
        use JobState::*;
        let all = [Queued, Running, Succeeded, Failed];
        let legal = [(Queued, Claim, Running), (Running, Reclaim, Running), (Running, Succeed, Succeeded), (Running, Fail, Failed)];
        for s in all {
            for e in [Claim, Reclaim, Succeed, Fail] {
                let want = legal.iter().find(|(f, ev, _)| *f == s && *ev == e).map(|t| t.2);
                assert_eq!(s.apply(e).ok(), want, "{s:?} {e:?}");
            }
        }
    }

    #[test]
    fn proposals_are_decided_once() {
        let a = ApprovalState::Proposed.decide(Decision::Approve).unwrap();
        assert_eq!(a, ApprovalState::Approved);
        assert_eq!(a.decide(Decision::Close), None);
        assert_eq!(ApprovalState::Closed.decide(Decision::Approve), None);
        for s in ["proposed", "approved", "closed"] {
            assert_eq!(ApprovalState::parse(s).unwrap().as_str(), s);
        }
    }
}
