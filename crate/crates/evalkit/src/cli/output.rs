//! Plain aligned text for humans. No colors or cursor control, so output diffs cleanly.

use evalkit_core::{ModuleResult, ScoreValue};

use crate::evaluator::EvaluationReport;
use crate::service::{EvaluationJob, LeaderboardEntry, ResultProposal};

/// Left-aligned columns separated by two spaces; trailing spaces trimmed.
pub fn table(rows: &[Vec<String>]) -> String {
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..ncols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    rows.iter()
        .map(|r| {
            let line: String = r
                .iter()
                .enumerate()
                .map(|(i, cell)| format!("{cell:<w$}", w = if i + 1 == r.len() { 0 } else { widths[i] + 2 }))
                .collect();
            line.trim_end().to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn value(v: &ScoreValue) -> String {
    match v {
        ScoreValue::Scalar(x) => x.to_string(),
        other => serde_json::to_string(other).unwrap_or_default(),
    }
}

pub fn score_rows(r: &ModuleResult) -> Vec<Vec<String>> {
    r.values.iter().map(|(k, v)| vec![k.clone(), value(v)]).collect()
}

pub fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or_default().to_string()
}

pub fn report(r: &EvaluationReport) -> String {
    let mut head = vec![
        vec!["task".to_string(), r.task.clone()],
        vec!["dataset".to_string(), format!("{} ({} rows, sha256 {})", r.dataset.path.display(), r.dataset.n_rows, r.dataset.sha256)],
        vec!["model".to_string(), r.provider.model.clone()],
    ];
    if let Some(seed) = r.seed {
        head.push(vec!["seed".to_string(), seed.to_string()]);
    }
    head.push(vec!["predictions".to_string(), r.predictions_path.display().to_string()]);

    let mut scores = vec![vec!["metric".to_string(), "key".into(), "value".into(), "ci".into()]];
    for m in &r.metrics {
        for (k, v) in &m.values {
            let ci = r
                .confidence_intervals
                .get(&m.module_id)
                .and_then(|c| c.get(k))
                .map(|c| format!("[{}, {}] at {}", c.low, c.high, c.level))
                .unwrap_or_default();
            scores.push(vec![m.module_id.clone(), k.clone(), value(v), ci]);
        }
    }

    let p = &r.perf;
    let perf = vec![
        vec!["examples".to_string(), p.n_examples.to_string()],
        vec!["batch size".to_string(), p.batch_size.to_string()],
        vec!["total time s".to_string(), format!("{:.6}", p.total_time_s)],
        vec!["throughput /s".to_string(), format!("{:.3}", p.throughput)],
        vec![
            "latency ms".to_string(),
            format!(
                "mean {:.3}  p50 {:.3}  p90 {:.3}  p99 {:.3}  max {:.3}",
                p.latency_ms.mean, p.latency_ms.p50, p.latency_ms.p90, p.latency_ms.p99, p.latency_ms.max
            ),
        ],
    ];
    [table(&head), table(&scores), table(&perf)].join("\n\n")
}

pub fn job(j: &EvaluationJob) -> String {
    let mut rows = vec![
        vec!["id".to_string(), j.id.clone()],
        vec!["state".to_string(), j.state.as_str().into()],
        vec!["task".to_string(), j.spec.task.clone()],
        vec!["dataset".to_string(), format!("{} (sha256 {})", j.dataset.path, j.dataset.sha256.as_deref().unwrap_or("-"))],
        vec!["recoveries".to_string(), j.recoveries.to_string()],
    ];
    for p in &j.proposals {
        rows.push(vec!["proposal".to_string(), p.clone()]);
    }
    let mut out = table(&rows);
    if let Some(f) = &j.failure {
        out.push_str("\nfailure:\n");
        for l in f.lines() {
            out.push_str("  ");
            out.push_str(l);
            out.push('\n');
        }
        out.pop();
    }
    out
}

pub fn proposal(p: &ResultProposal) -> String {
    let mut rows = vec![
        vec!["id".to_string(), p.id.clone()],
        vec!["model".to_string(), p.model.clone()],
        vec!["dataset".to_string(), p.dataset.path.clone()],
        vec!["state".to_string(), p.state.as_str().into()],
        vec!["verified".to_string(), p.verified.to_string()],
    ];
    if let Some(j) = &p.job_id {
        rows.push(vec!["job".to_string(), j.clone()]);
    }
    for (k, v) in &p.metrics {
        rows.push(vec![k.clone(), v.to_string()]);
    }
    table(&rows)
}

pub fn leaderboard(entries: &[LeaderboardEntry]) -> String {
    if entries.is_empty() {
        return "no entries".to_string();
    }
    let mut rows = vec![vec![
        "rank".to_string(),
        "model".into(),
        "value".into(),
        "verified".into(),
        "state".into(),
        "proposal".into(),
    ]];
    for e in entries {
        rows.push(vec![
            e.rank.to_string(),
            e.model.clone(),
            e.value.to_string(),
            if e.verified { "verified".into() } else { "self-reported".into() },
            e.state.as_str().into(),
            e.proposal_id.clone(),
        ]);
    }
    table(&rows)
}
