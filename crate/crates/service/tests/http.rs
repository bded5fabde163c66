use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use opinion_core::{ManualClock, Millis};
use opinion_service::api::router;
use opinion_service::{Service, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const START: i64 = 1_700_000_000_000;

fn open(dir: &Path, clock: Arc<ManualClock>) -> Arc<Service> {
    Service::open(ServiceConfig::new(dir), clock).unwrap()
}

async fn call(svc: &Arc<Service>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    call_with(svc, method, uri, body, None).await
}

async fn call_with(
    svc: &Arc<Service>,
    method: &str,
    uri: &str,
    body: Option<Value>,
    key: Option<&str>,
) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(svc.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn human_only() -> Value {
    json!({"condition": "human_only", "rng_seed": 3})
}

fn scripted(seed: u64) -> Value {
    json!({
        "condition": "ai_only",
        "rng_seed": seed,
        "ai_backend": {"kind": "scripted", "policy": "majority-copy"}
    })
}

async fn create(svc: &Arc<Service>, config: Value) -> String {
    let (status, body) = call(svc, "POST", "/v1/runs", Some(config)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["run_id"].as_str().unwrap().to_string()
}

async fn task(svc: &Arc<Service>, run: &str, participant: &str) -> (StatusCode, Value) {
    call(
        svc,
        "POST",
        &format!("/v1/runs/{run}/tasks/next"),
        Some(json!({"participant_id": participant})),
    )
    .await
}

async fn choose(svc: &Arc<Service>, token: &str, index: usize) -> (StatusCode, Value) {
    call(svc, "POST", "/v1/sessions/choice", Some(json!({"token": token, "index": index}))).await
}

async fn revise(svc: &Arc<Service>, token: &str, text: &str) -> (StatusCode, Value) {
    call(svc, "POST", "/v1/sessions/revision", Some(json!({"token": token, "text": text}))).await
}

const TWELVE: &str = "we should keep a small amount of red meat in a balanced weekly diet";

#[tokio::test]
async fn create_validates_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path(), Arc::new(ManualClock::new(Millis(START))));

    let (status, body) = call(&svc, "POST", "/v1/runs", Some(json!({"iterations": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_request");

    let (status, _) = call(&svc, "POST", "/v1/runs", Some(json!({"imbalance": {"positive": 3, "negative": 3}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (s1, b1) = call_with(&svc, "POST", "/v1/runs", Some(human_only()), Some("k1")).await;
    assert_eq!(s1, StatusCode::CREATED);
    let (s2, b2) = call_with(&svc, "POST", "/v1/runs", Some(human_only()), Some("k1")).await;
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(b1["run_id"], b2["run_id"]);
    assert_eq!(b2["created"], false);

    let (s3, b3) = call_with(&svc, "POST", "/v1/runs", Some(scripted(1)), Some("k1")).await;
    assert_eq!(s3, StatusCode::CONFLICT, "{b3}");

    let (status, body) = call(&svc, "GET", "/v1/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["runs"].as_array().unwrap().len(), 1);

    let (status, body) = call(&svc, "GET", &format!("/v1/runs/{}", b1["run_id"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["total_slots"], 200);
    assert_eq!(body["committed"], 0);

    let (status, body) = call(&svc, "POST", "/v1/runs", Some(json!("not an object"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
}

#[tokio::test]
async fn unknown_run_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path(), Arc::new(ManualClock::new(Millis(START))));
    for uri in ["/v1/runs/nope", "/v1/runs/nope/metrics", "/v1/runs/nope/transcript"] {
        let (status, body) = call(&svc, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "not_found");
    }
    let (status, _) = task(&svc, "nope", "p").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn human_session_enforces_display_period_and_length() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(Millis(START)));
    let svc = open(dir.path(), clock.clone());
    let run = create(&svc, human_only()).await;

    let (status, t) = task(&svc, &run, "alice").await;
    assert_eq!(status, StatusCode::OK, "{t}");
    let n = t["statements"].as_array().unwrap().len();
    assert!((3..=5).contains(&n));
    assert_eq!(t["display_period_ms"], 60_000);
    assert_eq!(t["min_words"], 5);
    assert_eq!(t["expires_at"], START + 15 * 60_000);
    let token = t["token"].as_str().unwrap().to_string();

    let (status, _) = choose(&svc, &token, n).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, r) = choose(&svc, &token, 1).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["index"], 1);
    assert_eq!(r["revision_not_before"], START + 60_000);

    clock.advance(10_000);
    let (status, e) = revise(&svc, &token, TWELVE).await;
    assert_eq!(status, StatusCode::TOO_EARLY);
    assert_eq!(e["error"], "too_early");
    assert_eq!(e["not_before"], START + 60_000);

    clock.advance(51_000);
    let (status, e) = revise(&svc, &token, "red meat is fine").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["words"], 4);
    assert_eq!(e["min_words"], 5);

    let (status, r) = revise(&svc, &token, TWELVE).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["committed"], true);
    assert_eq!(r["iteration_complete"], false);

    let (status, e) = revise(&svc, &token, TWELVE).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(e["error"], "invalid_token");
    let (status, _) = choose(&svc, "not-a-token", 0).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    // one slot per participant per run
    let (status, _) = task(&svc, &run, "alice").await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, tr) = call(&svc, "GET", &format!("/v1/runs/{run}/transcript"), None).await;
    let committed: Vec<&Value> = tr["slots"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["status"] == "committed")
        .collect();
    assert_eq!(committed.len(), 1);
    assert_eq!(committed[0]["text"], TWELVE);
    assert_eq!(committed[0]["chosen_index"], 1);
    assert_eq!(committed[0]["agent"], "alice");
}

#[tokio::test]
async fn visibility_and_abandon() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path(), Arc::new(ManualClock::new(Millis(START))));
    let run = create(&svc, human_only()).await;
    let (_, t) = task(&svc, &run, "bob").await;
    let token = t["token"].as_str().unwrap();

    let (status, _) = call(
        &svc,
        "POST",
        "/v1/sessions/visibility",
        Some(json!({"token": token, "hidden": true})),
    )
    .await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, tr) = call(&svc, "GET", &format!("/v1/runs/{run}/transcript"), None).await;
    let text = tr["events"].to_string();
    assert!(text.contains("visibility_changed"), "{text}");

    let (_, before) = call(&svc, "GET", &format!("/v1/runs/{run}"), None).await;
    let (status, _) = call(&svc, "POST", "/v1/sessions/abandon", Some(json!({"token": token}))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, after) = call(&svc, "GET", &format!("/v1/runs/{run}"), None).await;
    assert_eq!(before["counts"]["dispatched"], 1);
    assert_eq!(after["counts"]["dispatched"], 0);
    let (status, _) = choose(&svc, token, 0).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    // an abandoning participant may take another slot
    let (status, _) = task(&svc, &run, "bob").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn expired_token_releases_slot() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(Millis(START)));
    let svc = open(dir.path(), clock.clone());
    let run = create(&svc, human_only()).await;
    let (_, t) = task(&svc, &run, "carol").await;
    let token = t["token"].as_str().unwrap();
    let (status, _) = choose(&svc, token, 0).await;
    assert_eq!(status, StatusCode::OK);

    clock.advance(15 * 60_000);
    let (status, e) = revise(&svc, token, TWELVE).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert!(e["message"].as_str().unwrap().contains("expired"));
    let (_, s) = call(&svc, "GET", &format!("/v1/runs/{run}"), None).await;
    assert_eq!(s["counts"]["dispatched"], 0);
    assert_eq!(s["counts"]["ready"], 25);
}

#[tokio::test]
async fn ai_only_runs_offer_no_human_work_and_report_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let svc = open(dir.path(), Arc::new(ManualClock::new(Millis(START))));
    let run = create(&svc, scripted(9)).await;
    svc.wait_ai(&run).unwrap();

    let (status, s) = call(&svc, "GET", &format!("/v1/runs/{run}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["status"]["state"], "complete", "{s}");
    assert_eq!(s["committed"], 200);

    let (status, _) = task(&svc, &run, "dave").await;
    assert_eq!(status, StatusCode::GONE);

    let (status, m) = call(&svc, "GET", &format!("/v1/runs/{run}/metrics"), None).await;
    assert_eq!(status, StatusCode::OK);
    let records = m["records"].as_array().unwrap();
    assert_eq!(records.len(), 9);
    assert_eq!(records[0]["iteration"], 0);
    assert!((records[0]["polarization"].as_f64().unwrap() - 0.9856).abs() < 1e-12);
    for r in records {
        let p = r["polarization"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(r["nci"].is_null() || r["nci"].as_f64().unwrap().abs() <= 1.0 + 1e-12);
    }
}

#[tokio::test]
async fn ai_only_run_without_free_slots_returns_204() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig::new(dir.path());
    config.autostart_ai = false;
    let svc = Service::open(config, Arc::new(ManualClock::new(Millis(START)))).unwrap();
    let run = create(&svc, scripted(2)).await;
    let (status, body) = task(&svc, &run, "erin").await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert!(body.is_null());
}

#[tokio::test]
async fn metrics_are_partial_mid_run() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(Millis(START)));
    let svc = open(dir.path(), clock.clone());
    let run = create(&svc, human_only()).await;

    let (_, m) = call(&svc, "GET", &format!("/v1/runs/{run}/metrics"), None).await;
    assert_eq!(m["records"].as_array().unwrap().len(), 1);

    let mut tokens = Vec::new();
    for p in 0..25 {
        let (status, t) = task(&svc, &run, &format!("p{p}")).await;
        assert_eq!(status, StatusCode::OK);
        let token = t["token"].as_str().unwrap().to_string();
        assert_eq!(choose(&svc, &token, 0).await.0, StatusCode::OK);
        tokens.push(token);
    }
    // iteration 2 depends on iteration 1, so nothing else is ready
    let (status, _) = task(&svc, &run, "late").await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    clock.advance(60_000);
    let mut last = Value::Null;
    for token in &tokens {
        let (status, r) = revise(&svc, token, TWELVE).await;
        assert_eq!(status, StatusCode::OK);
        last = r;
    }
    assert_eq!(last["iteration_complete"], true);
    assert_eq!(last["run_complete"], false);

    let (_, m) = call(&svc, "GET", &format!("/v1/runs/{run}/metrics"), None).await;
    let records = m["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1]["iteration"], 1);
    // everyone kept an agreeing sentence
    assert_eq!(records[1]["polarization"], 0.0);
    let (status, _) = task(&svc, &run, "late").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(Millis(START)));
    let svc = open(dir.path(), clock.clone());
    let run = create(&svc, human_only()).await;
    let (_, t) = task(&svc, &run, "frank").await;
    let token = t["token"].as_str().unwrap().to_string();
    assert_eq!(choose(&svc, &token, 2).await.0, StatusCode::OK);
    let (_, before) = call(&svc, "GET", &format!("/v1/runs/{run}/transcript"), None).await;
    svc.shutdown();
    drop(svc);

    let clock = Arc::new(ManualClock::new(Millis(START + 61_000)));
    let svc = open(dir.path(), clock);
    let (_, after) = call(&svc, "GET", &format!("/v1/runs/{run}/transcript"), None).await;
    assert_eq!(before, after);
    let (status, r) = revise(&svc, &token, TWELVE).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    let (_, s) = call(&svc, "GET", &format!("/v1/runs/{run}"), None).await;
    assert_eq!(s["committed"], 1);
    let (status, _) = task(&svc, &run, "frank").await;
    assert_eq!(status, StatusCode::CONFLICT);
}
