use std::io::Write;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use lodestar_cli::service::{router, AppState, EVENTS_FILE};
use lodestar_core::benchmarks::CompassFile;

fn compass() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/benchmarks/rosenbrock3.json");
    serde_json::to_value(CompassFile::load(&path).unwrap().compass).unwrap()
}

async fn call(state: &AppState, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    call_raw(state, method, uri, body.map(|b| b.to_string()).unwrap_or_default()).await
}

async fn call_raw(state: &AppState, method: Method, uri: &str, body: String) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let response = router(state.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(state: &AppState, budget: usize) -> String {
    let (status, body) = call(state, Method::POST, "/v1/campaigns", Some(json!({"compass": compass(), "seed": 3, "budget": budget}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

async fn observe(state: &AppState, id: &str, trial: &Value, value: f64) -> (StatusCode, Value) {
    call(state, Method::POST, &format!("/v1/campaigns/{id}/observe"), Some(json!({"trial_id": trial, "value": value}))).await
}

fn open(dir: &Path) -> AppState {
    AppState::open(dir, None).unwrap()
}

#[tokio::test]
async fn ask_tell_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let state = open(dir.path());
    let id = create(&state, 9).await;
    assert_eq!(id, "c0000");

    let (status, first) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/suggest"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["round"], 0);
    let trials = first["trials"].as_array().unwrap().clone();
    assert_eq!(trials.len(), 3);

    // asking again before telling returns the same open trials
    let (_, again) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/suggest"), None).await;
    assert_eq!(again["trials"], first["trials"]);

    for (i, t) in trials.iter().enumerate() {
        let (status, body) = observe(&state, &id, &t["id"], 10.0 - i as f64).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, body) = observe(&state, &id, &trials[0]["id"], 1.0).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(body["error"].is_string());

    let (_, next) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/suggest"), None).await;
    assert_eq!(next["round"], 1);
    assert_eq!(next["trials"].as_array().unwrap().len(), 3);

    let (_, view) = call(&state, Method::GET, &format!("/v1/campaigns/{id}"), None).await;
    assert_eq!(view["spent"], 3);
    assert_eq!(view["best"]["value"], 8.0);
    assert_eq!(view["trials"].as_array().unwrap().len(), 6);
    assert_eq!(view["trials"][3]["status"], "open");

    let (_, list) = call(&state, Method::GET, "/v1/campaigns", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);

    let (status, report) = call(&state, Method::GET, &format!("/v1/campaigns/{id}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["trajectory"].as_array().unwrap().len(), 3);
    assert!(report["report"].is_null());

    let (status, insights) = call(&state, Method::GET, &format!("/v1/campaigns/{id}/insights"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(insights["history"].is_array());

    let (status, fin) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(fin["summary"].is_string());
    let next_trial = &next["trials"][0]["id"];
    let (status, _) = observe(&state, &id, next_trial, 1.0).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn request_errors() {
    let dir = tempfile::tempdir().unwrap();
    let state = open(dir.path());
    let (status, _) = call(&state, Method::GET, "/v1/campaigns/c0042", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&state, Method::POST, "/v1/campaigns/c0042/suggest", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call_raw(&state, Method::POST, "/v1/campaigns", "{not json".into()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&state, Method::POST, "/v1/campaigns", Some(json!({"compass": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&state, Method::POST, "/v1/campaigns", Some(json!({"compass": compass(), "budget": 0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let mut bad = compass();
    bad["title"] = json!("  ");
    let (status, _) = call(&state, Method::POST, "/v1/campaigns", Some(json!({"compass": bad}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let id = create(&state, 6).await;
    let (status, _) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/observe"), Some(json!({"value": 1.0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = observe(&state, &id, &json!("t0099"), 1.0).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(state.campaign_ids().contains(&id));
}

#[tokio::test]
async fn restart_rebuilds_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before, insights, report) = {
        let state = open(dir.path());
        let id = create(&state, 9).await;
        let (_, s) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/suggest"), None).await;
        for (i, t) in s["trials"].as_array().unwrap().iter().enumerate() {
            observe(&state, &id, &t["id"], 2.0 * i as f64 + 0.125).await;
        }
        let (_, s) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/suggest"), None).await;
        observe(&state, &id, &s["trials"][1]["id"], -1.5).await;
        let (_, v) = call(&state, Method::GET, &format!("/v1/campaigns/{id}"), None).await;
        let (_, i) = call(&state, Method::GET, &format!("/v1/campaigns/{id}/insights"), None).await;
        let (_, r) = call(&state, Method::GET, &format!("/v1/campaigns/{id}/report"), None).await;
        (id, v, i, r)
    };

    let state = open(dir.path());
    let (_, after) = call(&state, Method::GET, &format!("/v1/campaigns/{id}"), None).await;
    assert_eq!(after, before);
    assert_eq!(call(&state, Method::GET, &format!("/v1/campaigns/{id}/insights"), None).await.1, insights);
    assert_eq!(call(&state, Method::GET, &format!("/v1/campaigns/{id}/report"), None).await.1, report);

    // the open trials survive and the campaign carries on
    let (status, body) = observe(&state, &id, &before["trials"][3]["id"], 4.0).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, _) = observe(&state, &id, &before["trials"][4]["id"], 4.0).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let id2 = create(&state, 3).await;
    assert_eq!(id2, "c0001");
}

#[tokio::test]
async fn torn_write_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let state = open(dir.path());
        let id = create(&state, 6).await;
        let (_, s) = call(&state, Method::POST, &format!("/v1/campaigns/{id}/suggest"), None).await;
        observe(&state, &id, &s["trials"][0]["id"], 1.0).await;
        let (_, v) = call(&state, Method::GET, &format!("/v1/campaigns/{id}"), None).await;
        (id, v)
    };
    let log = dir.path().join(&id).join(EVENTS_FILE);
    let mut file = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    file.write_all(br#"{"seq":9999,"kind":"observation-rec"#).unwrap();
    drop(file);

    let state = open(dir.path());
    let (_, after) = call(&state, Method::GET, &format!("/v1/campaigns/{id}"), None).await;
    assert_eq!(after, before);
    let (status, _) = observe(&state, &id, &before["trials"][1]["id"], 2.0).await;
    assert_eq!(status, StatusCode::OK);
    drop(state);

    let state = open(dir.path());
    let (_, view) = call(&state, Method::GET, &format!("/v1/campaigns/{id}"), None).await;
    assert_eq!(view["spent"], 2);
    assert_eq!(view["events"].as_u64().unwrap(), before["events"].as_u64().unwrap() + 1);
}
