//! The HTTP API of `evalkit serve`, driven with the dummy provider.

mod common;

use common::*;
use serde_json::{json, Value};

fn provider(data: &std::path::Path, model: &str, extra: &[&str]) -> Value {
    let mut cmd = vec![DUMMY.to_string(), "--dataset".into(), data.display().to_string(), "--model".into(), model.into()];
    cmd.extend(extra.iter().map(|s| s.to_string()));
    json!({ "command": cmd })
}

fn board(s: &Server, data: &str, extra: &str) -> Vec<Value> {
    let r = s.get(&format!("/leaderboards?dataset={}&metric=accuracy{extra}", enc(data)));
    assert_eq!(r.status, 200, "{}", r.body);
    r.body["entries"].as_array().unwrap().clone()
}

fn models(entries: &[Value]) -> Vec<&str> {
    entries.iter().map(|e| e["model"].as_str().unwrap()).collect()
}

#[test]
fn submit_run_review_rank() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("reviews.jsonl");
    sentiment(&data, 20);
    let data_s = std::fs::canonicalize(&data).unwrap().display().to_string();
    let s = Server::start(&d.path().join("svc"), &["--owner", "acme/=tok-acme", "--workers", "2"]);

    let spec = json!({
        "task": "text-classification",
        "dataset": data_s,
        "providers": [
            provider(&data, "acme/good", &["--wrong-every", "5"]),
            provider(&data, "acme/best", &[]),
        ],
        "metrics": ["accuracy", "f1"],
    });
    let r = s.post("/jobs", &spec, None);
    assert_eq!(r.status, 201, "{}", r.body);
    let job_id = r.body["job"]["id"].as_str().unwrap().to_string();
    assert_eq!(job_id.len(), 26);
    let again = s.post("/jobs", &spec, None);
    assert_eq!(again.status, 200);
    assert_eq!(again.body["job"]["id"], job_id.as_str());
    assert_eq!(again.body["created"], false);

    let job = s.wait_job(&job_id);
    assert_eq!(job["state"], "succeeded", "{job}");
    let pids: Vec<String> = job["proposals"].as_array().unwrap().iter().map(|p| p.as_str().unwrap().into()).collect();
    assert_eq!(pids.len(), 2);
    let proposals: Vec<Value> = pids.iter().map(|p| s.get(&format!("/proposals/{p}")).body).collect();
    let find = |m: &str| proposals.iter().find(|p| p["model"] == m).unwrap().clone();
    let good = find("acme/good");
    let best = find("acme/best");
    assert_eq!(good["state"], "proposed");
    assert_eq!(good["verified"], true);
    assert_eq!(good["metrics"]["accuracy"], 0.8);
    assert_eq!(best["metrics"]["accuracy"], 1.0);
    assert_eq!(good["report"]["dataset"]["n_rows"], 20);
    let good_id = good["id"].as_str().unwrap();
    let best_id = best["id"].as_str().unwrap();

    // Review requires the owner's token and happens once.
    let denied = s.post(&format!("/proposals/{good_id}/review"), &json!({"decision": "approve"}), Some("nope"));
    assert_eq!((denied.status, denied.body["error"]["code"].as_str()), (401, Some("unauthorized")));
    assert_eq!(s.get(&format!("/proposals/{good_id}")).body["state"], "proposed");
    let ok = s.post(&format!("/proposals/{good_id}/review"), &json!({"decision": "approve"}), Some("tok-acme"));
    assert_eq!((ok.status, ok.body["state"].as_str()), (200, Some("approved")));
    let twice = s.post(&format!("/proposals/{good_id}/review"), &json!({"decision": "approve"}), Some("tok-acme"));
    assert_eq!((twice.status, twice.body["error"]["code"].as_str()), (409, Some("already_decided")));

    // Self-reported results join the board, labelled.
    let imported = s.post(
        "/results/self-reported",
        &json!({"model": "other/claimed", "dataset": data_s, "metric": "accuracy", "value": 0.95, "source": "blog post"}),
        None,
    );
    assert_eq!(imported.status, 201, "{}", imported.body);
    assert_eq!(imported.body["verified"], false);
    let nan = s.post("/results/self-reported", &json!({"model": "m", "dataset": "d", "metric": "accuracy", "value": "NaN"}), None);
    assert_eq!((nan.status, nan.body["error"]["code"].as_str()), (422, Some("invalid_value")));
    let unknown = s.post("/results/self-reported", &json!({"model": "m", "dataset": "d", "metric": "acc", "value": 1}), None);
    assert_eq!(unknown.body["error"]["code"], "unknown_metric");

    let entries = board(&s, &data_s, "");
    assert_eq!(models(&entries), ["acme/best", "other/claimed", "acme/good"]);
    assert_eq!(entries.iter().map(|e| e["verified"].as_bool().unwrap()).collect::<Vec<_>>(), [true, false, true]);
    assert_eq!(entries.iter().map(|e| e["rank"].as_u64().unwrap()).collect::<Vec<_>>(), [1, 2, 3]);
    assert_eq!(models(&board(&s, &data_s, "&verified=true")), ["acme/best", "acme/good"]);
    assert_eq!(models(&board(&s, &data_s, "&verified=false")), ["other/claimed"]);
    // The content hash works as the dataset key too.
    let hash = job["dataset"]["sha256"].as_str().unwrap();
    assert_eq!(board(&s, hash, "").len(), 2);

    // Closing hides an entry from the default board but never deletes it.
    let closed = s.post(&format!("/proposals/{best_id}/review"), &json!({"decision": "close"}), Some("tok-acme"));
    assert_eq!(closed.body["state"], "closed");
    assert_eq!(models(&board(&s, &data_s, "")), ["other/claimed", "acme/good"]);
    assert_eq!(models(&board(&s, &data_s, "&include_closed=true")), ["acme/best", "other/claimed", "acme/good"]);
    let still = s.get(&format!("/proposals/{best_id}"));
    assert_eq!((still.status, still.body["state"].as_str()), (200, Some("closed")));
    assert_eq!(still.body["metrics"]["accuracy"], 1.0);

    // Forced resubmission reruns the evaluation with identical values.
    let mut forced = spec.clone();
    forced["force"] = json!(true);
    let r = s.post("/jobs", &forced, None);
    assert_eq!(r.status, 201);
    let rerun = s.wait_job(r.body["job"]["id"].as_str().unwrap());
    assert_eq!(rerun["state"], "succeeded");
    for p in rerun["proposals"].as_array().unwrap() {
        let p = s.get(&format!("/proposals/{}", p.as_str().unwrap())).body;
        let original = find(p["model"].as_str().unwrap());
        assert_eq!(p["metrics"], original["metrics"]);
        assert_eq!(p["report"]["metrics"], original["report"]["metrics"]);
    }

    let card = s.get(&format!("/model-card-metadata?model={}", enc("acme/good"))).body;
    let results = card["model-index"][0]["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["dataset"]["revision"], hash);
}

#[test]
fn error_responses_carry_codes() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("d.jsonl");
    sentiment(&data, 4);
    let s = Server::start(&d.path().join("svc"), &[]);

    let r = s.get("/jobs/01ARZ3NDEKTSV4RRFFQ69G5FAV");
    assert_eq!((r.status, r.body["error"]["code"].as_str()), (404, Some("not_found")));
    let r = s.get("/proposals/missing");
    assert_eq!(r.status, 404);

    let bad = json!({
        "task": "text-classification",
        "dataset": data.display().to_string(),
        "providers": [{"command": [DUMMY]}],
        "metrics": ["accuracy", "not_a_metric"],
    });
    let r = s.post("/jobs", &bad, None);
    assert_eq!((r.status, r.body["error"]["code"].as_str()), (422, Some("invalid_spec")));
    assert_eq!(r.body["error"]["fields"][0]["field"], "metrics[1]");
    assert!(r.body["error"]["fields"][0]["message"].as_str().unwrap().contains("not_a_metric"));

    let mut missing = bad.clone();
    missing["metrics"] = json!([]);
    missing["dataset"] = json!(d.path().join("absent.jsonl").display().to_string());
    let r = s.post("/jobs", &missing, None);
    assert_eq!(r.body["error"]["code"], "dataset_unreadable");

    let r = s.post("/jobs", &json!({"task": "text-classification"}), None);
    assert_eq!(r.body["error"]["code"], "invalid_spec");

    let r = s.get("/leaderboards?dataset=x&metric=p_value");
    assert_eq!((r.status, r.body["error"]["code"].as_str()), (422, Some("unknown_metric_direction")));
    let r = s.get("/leaderboards?metric=accuracy");
    assert_eq!((r.status, r.body["error"]["code"].as_str()), (400, Some("bad_request")));
    let r = s.get("/leaderboards?dataset=nothing-here&metric=accuracy");
    assert_eq!((r.status, r.body["entries"].clone()), (200, json!([])));

    let r = s.post("/proposals/x/review", &json!({"decision": "maybe"}), Some("t"));
    assert_eq!(r.status, 400);
}

#[test]
fn crashing_provider_fails_the_job_with_its_stderr() {
    let d = tempfile::tempdir().unwrap();
    let data = d.path().join("d.jsonl");
    sentiment(&data, 6);
    let s = Server::start(&d.path().join("svc"), &[]);
    let spec = json!({
        "task": "text-classification",
        "dataset": data.display().to_string(),
        "providers": [provider(&data, "m", &["--crash-after", "2"])],
        "batch_size": 1,
    });
    let r = s.post("/jobs", &spec, None);
    let job = s.wait_job(r.body["job"]["id"].as_str().unwrap());
    assert_eq!(job["state"], "failed");
    assert!(job["failure"].as_str().unwrap().contains("simulated crash after 2 responses"), "{job}");
    assert_eq!(job["proposals"], json!([]));
}
