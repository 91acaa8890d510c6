//! Route-level tests against a replay-backed service.

use std::path::Path;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use triz_core::llm::{FnBackend, GenerationRequest};
use triz_core::{bundled_assets_dir, Gateway, GatewayError, KnowledgeBase, ProviderConfig};
use triz_service::job::{Job, JobKind, JobRequest, JobState};
use triz_service::store::{Collection, RESTART_NOTICE};
use triz_service::{router, AppState, ServiceConfig, Store};

fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig { data_dir: dir.to_path_buf(), ..ServiceConfig::default() }
}

fn replay_app(dir: &Path) -> Router {
    let gw = Gateway::replay(ProviderConfig::fixture(), bundled_assets_dir().join("transcripts")).unwrap();
    router(AppState::new(&config(dir), gw, KnowledgeBase::bundled()).unwrap())
}

fn input(name: &str) -> String {
    std::fs::read_to_string(bundled_assets_dir().join("inputs").join(format!("{name}.txt"))).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call_text(app, method, uri, body, None).await;
    let v = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, v)
}

async fn call_text(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
    key: Option<&str>,
) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn submit(app: &Router, body: Value) -> String {
    let (status, job) = call(app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    assert_eq!(job["state"], "queued");
    job["id"].as_str().unwrap().to_string()
}

/// Polls until the job is terminal, returning every snapshot seen.
async fn wait(app: &Router, id: &str) -> Vec<Value> {
    let deadline = Instant::now() + Duration::from_secs(60);
    let mut seen = Vec::new();
    loop {
        let (status, job) = call(app, "GET", &format!("/api/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let done = matches!(job["state"].as_str(), Some("done" | "failed"));
        seen.push(job);
        if done {
            return seen;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn case_seven_solve_produces_the_expected_report() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let id = submit(&app, json!({"kind": "solve", "problem_text": input("case7")})).await;
    let job = wait(&app, &id).await.pop().unwrap();
    assert_eq!(job["state"], "done", "{job}");
    let report_id = job["result_ref"].as_str().unwrap();

    let (status, report) = call(&app, "GET", &format!("/api/reports/{report_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["contradiction"], json!({"improving": 6, "worsening": 13}));
    let idx: Vec<u64> = report["principles"].as_array().unwrap().iter().map(|p| p["index"].as_u64().unwrap()).collect();
    assert_eq!(idx, [2, 39]);

    let (status, md) = call_text(&app, "GET", &format!("/api/reports/{report_id}?format=md"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(md.contains("Extraction") && md.contains("Strong Oxidants"));
    let (_, tex) = call_text(&app, "GET", &format!("/api/reports/{report_id}?format=tex"), None, None).await;
    assert!(tex.starts_with("\\documentclass"));
    let (status, err) = call(&app, "GET", &format!("/api/reports/{report_id}?format=pdf"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "validation_error");
}

#[tokio::test(flavor = "multi_thread")]
async fn solve_stages_are_reported_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let id = submit(&app, json!({"kind": "solve", "case_id": "case7"})).await;
    let snapshots = wait(&app, &id).await;
    let order = ["distill", "identify", "lookup", "generate", "summarize"];
    let mut last = 0;
    for s in snapshots.iter().filter_map(|j| j["stage"].as_str()) {
        let pos = order.iter().position(|o| *o == s).unwrap();
        assert!(pos >= last, "stage went backwards to {s}");
        last = pos;
    }
    assert_eq!(snapshots.last().unwrap()["stage"], "summarize");
}

#[tokio::test(flavor = "multi_thread")]
async fn contradiction_override_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let body = json!({
        "kind": "solve",
        "problem_text": input("btms"),
        "overrides": {"contradiction": {"improving": 6, "worsening": 22}},
    });
    let id = submit(&app, body).await;
    let job = wait(&app, &id).await.pop().unwrap();
    assert_eq!(job["state"], "done", "{job}");
    let (_, report) = call(&app, "GET", &format!("/api/reports/{}", job["result_ref"].as_str().unwrap()), None).await;
    assert_eq!(report["overrides_applied"], json!(["contradiction"]));
    let (_, md) =
        call_text(&app, "GET", &format!("/api/reports/{}?format=md", job["result_ref"].as_str().unwrap()), None, None)
            .await;
    assert!(md.contains("Nesting") && md.contains("Transition to a New Dimension"));
}

#[tokio::test(flavor = "multi_thread")]
async fn trials_progress_is_monotone_and_results_are_stored() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let id = submit(&app, json!({"kind": "trials", "problem_text": input("btms"), "n": 100})).await;
    let snapshots = wait(&app, &id).await;
    let completed: Vec<u64> = snapshots.iter().map(|j| j["progress"]["completed"].as_u64().unwrap()).collect();
    assert!(completed.windows(2).all(|w| w[0] <= w[1]), "{completed:?}");
    let last = snapshots.last().unwrap();
    assert_eq!(last["state"], "done", "{last}");
    assert_eq!(last["progress"], json!({"completed": 100, "total": 100}));

    let (status, result) = call(&app, "GET", &format!("/api/results/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(result["top"][0]["contradiction"], json!({"improving": 12, "worsening": 22}));
    assert_eq!(result["top"][1]["contradiction"], json!({"improving": 6, "worsening": 22}));
    assert_eq!(result["distribution"]["n_requested"], 100);
}

#[tokio::test(flavor = "multi_thread")]
async fn evaluate_job_writes_a_readable_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let (status, err) = call(&app, "GET", "/api/eval/case7", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");

    let id = submit(&app, json!({"kind": "evaluate", "case_id": "case7", "n": 100, "k": 3})).await;
    let job = wait(&app, &id).await.pop().unwrap();
    assert_eq!(job["state"], "done", "{job}");
    assert_eq!(job["result_ref"], "case7");
    let (status, eval) = call(&app, "GET", "/api/eval/case7", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(eval["evaluation"]["best"], "Half");
    assert_eq!(eval["evaluation"]["top"][0]["contradiction"], json!({"improving": 6, "worsening": 13}));
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_submissions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    for body in [
        json!({"kind": "trials", "problem_text": "x", "n": 0}),
        json!({"kind": "solve", "problem_text": "   "}),
        json!({"kind": "solve"}),
        json!({"kind": "evaluate", "problem_text": "x"}),
        json!({"kind": "solve", "case_id": "no-such-case"}),
        json!({"kind": "solve", "problem_text": "x", "overrides": {"principles": [41]}}),
        json!({"kind": "solve", "problem_text": "x", "overrides": {"contradiction": {"improving": 3, "worsening": 3}}}),
        json!({"kind": "launch"}),
    ] {
        let (status, err) = call(&app, "POST", "/api/jobs", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(err["code"], "validation_error");
        assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    let (status, err) = call(&app, "GET", "/api/jobs/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
    let (status, _) = call(&app, "GET", "/api/jobs/..%2F..%2Fetc", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn knowledge_base_and_case_routes() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let (_, params) = call(&app, "GET", "/api/kb/parameters", None).await;
    assert_eq!(params.as_array().unwrap().len(), 39);
    let (_, principles) = call(&app, "GET", "/api/kb/principles", None).await;
    assert_eq!(principles.as_array().unwrap().len(), 40);

    let (status, cell) = call(&app, "GET", "/api/kb/matrix/6/13", None).await;
    assert_eq!(status, StatusCode::OK);
    let titles: Vec<&str> =
        cell["principles"].as_array().unwrap().iter().map(|p| p["title"].as_str().unwrap()).collect();
    assert_eq!(titles, ["Extraction", "Strong Oxidants"]);
    let (status, err) = call(&app, "GET", "/api/kb/matrix/5/5", None).await;
    assert_eq!((status, err["message"].as_str().unwrap()), (StatusCode::NOT_FOUND, "No principle found for this case"));
    let (status, err) = call(&app, "GET", "/api/kb/matrix/40/1", None).await;
    assert_eq!((status, err["message"].as_str().unwrap()), (StatusCode::BAD_REQUEST, "Index out of range"));
    let (status, _) = call(&app, "GET", "/api/kb/matrix/x/1", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, cases) = call(&app, "GET", "/api/cases", None).await;
    let ids: Vec<&str> = cases.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"case7") && ids.contains(&"btms"));
}

fn slow_app(dir: &Path, capacity: usize) -> Router {
    let gw = Gateway::live(
        ProviderConfig::fixture(),
        FnBackend(|_: &GenerationRequest| {
            std::thread::sleep(Duration::from_millis(300));
            Err(GatewayError::Provider { status: 400, body: "stub".into() })
        }),
    )
    .unwrap();
    let cfg = ServiceConfig { queue_capacity: capacity, max_concurrent_jobs: 1, ..config(dir) };
    router(AppState::new(&cfg, gw, KnowledgeBase::bundled()).unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn full_queue_is_a_503_and_failures_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let app = slow_app(dir.path(), 1);
    let id = submit(&app, json!({"kind": "solve", "problem_text": "p"})).await;
    let (status, err) = call(&app, "POST", "/api/jobs", Some(json!({"kind": "solve", "problem_text": "q"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(err["code"], "queue_full");

    let job = wait(&app, &id).await.pop().unwrap();
    assert_eq!(job["state"], "failed");
    assert!(job["result_ref"].is_null());
    assert!(job["error"].as_str().unwrap().contains("distill"));
    // capacity is released once the job ends
    tokio::time::sleep(Duration::from_millis(50)).await;
    submit(&app, json!({"kind": "solve", "problem_text": "q"})).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn idempotency_key_returns_the_original_job() {
    let dir = tempfile::tempdir().unwrap();
    let app = replay_app(dir.path());
    let body = json!({"kind": "solve", "case_id": "case7"});
    let (s1, a) = call_text(&app, "POST", "/api/jobs", Some(body.clone()), Some("k-1")).await;
    let (s2, b) = call_text(&app, "POST", "/api/jobs", Some(body), Some("k-1")).await;
    assert_eq!((s1, s2), (StatusCode::ACCEPTED, StatusCode::OK));
    let (a, b): (Value, Value) = (serde_json::from_str(&a).unwrap(), serde_json::from_str(&b).unwrap());
    assert_eq!(a["id"], b["id"]);
    wait(&app, a["id"].as_str().unwrap()).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_fails_interrupted_jobs_and_keeps_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report_id = {
        let app = replay_app(dir.path());
        let id = submit(&app, json!({"kind": "solve", "case_id": "case7"})).await;
        let job = wait(&app, &id).await.pop().unwrap();
        job["result_ref"].as_str().unwrap().to_string()
    };
    // leave a job behind as if the process died while it was queued
    let orphan = Job::new(JobRequest {
        kind: JobKind::Trials,
        problem_text: Some("p".into()),
        case_id: None,
        overrides: None,
        n: Some(5),
        k: None,
        idempotency_key: None,
    });
    Store::open(dir.path()).unwrap().put(Collection::Jobs, &orphan.id, &orphan).unwrap();

    let app = replay_app(dir.path());
    let (_, job) = call(&app, "GET", &format!("/api/jobs/{}", orphan.id), None).await;
    assert_eq!(job["state"], "failed");
    assert_eq!(job["error"], RESTART_NOTICE);
    let stored: Job = Store::open(dir.path()).unwrap().get(Collection::Jobs, &orphan.id).unwrap().unwrap();
    assert_eq!(stored.state, JobState::Failed);

    let (status, report) = call(&app, "GET", &format!("/api/reports/{report_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["contradiction"], json!({"improving": 6, "worsening": 13}));
}
