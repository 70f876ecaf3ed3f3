use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use emberline_cli::server::{router, AppState};
use emberline_core::firespread::Mitigation;
use emberline_core::grid::Grid;
use emberline_core::service::Session;
use emberline_core::terrain::{write_bundle, FuelCatalog, LayerStack};
use emberline_core::RunConfig;
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn config(seed: u64) -> Value {
    json!({
        "seed": seed,
        "scenario": {
            "terrain": {
                "source": "procedural", "rows": 24, "cols": 24,
                "params": { "fuel_mix": [{ "fuel": 1, "weight": 1.0 }] }
            },
            "fire": { "ignition": [12, 12], "max_fire_duration": 40 }
        },
        "environment": { "agent_start": [0, 0] }
    })
}

fn app() -> Router {
    router(AppState::new(json!({}), None, Duration::from_secs(600)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, cfg: Value) -> (String, Value) {
    let (status, d) = call(app, "POST", "/sessions", Some(cfg)).await;
    assert_eq!(status, StatusCode::CREATED, "{d}");
    (d["id"].as_str().unwrap().to_string(), d)
}

fn ring(lo: usize, hi: usize) -> Vec<[usize; 2]> {
    let mut cells = Vec::new();
    for i in lo..=hi {
        cells.extend([[lo, i], [hi, i], [i, lo], [i, hi]]);
    }
    cells.sort();
    cells.dedup();
    cells
}

#[tokio::test]
async fn create_describes_the_session() {
    let app = app();
    let (id, d) = create(&app, config(1)).await;
    assert_eq!((d["rows"].as_u64(), d["cols"].as_u64()), (Some(24), Some(24)));
    assert_eq!(d["legend"].as_array().unwrap().len(), 7);
    assert_eq!(d["legend"][3], json!({ "code": 3, "name": "fireline" }));
    assert_eq!(d["state"]["revision"], 0);
    assert_eq!(d["state"]["grid"][12][12], 1);
    assert_eq!(d["ignition"], json!([12, 12]));

    // same seed, same initial payload
    let (id2, d2) = create(&app, config(1)).await;
    assert_ne!(id, id2);
    assert_eq!(d["state"], d2["state"]);
}

#[tokio::test]
async fn invalid_configs_are_rejected_with_key_paths() {
    let app = app();
    let mut cfg = config(1);
    cfg["environment"]["agnet_speed"] = json!(4);
    let (status, e) = call(&app, "POST", "/sessions", Some(cfg)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(e["error"].as_str().unwrap().contains("agnet_speed"), "{e}");

    let mut cfg = config(1);
    cfg["environment"]["agent_start"] = json!([40, 0]);
    let (status, e) = call(&app, "POST", "/sessions", Some(cfg)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(e["error"].as_str().unwrap().contains("environment.agent_start"), "{e}");

    // a fuel raster with an id outside the catalog
    let dir = tempfile::tempdir().unwrap();
    let stack = LayerStack::uniform(4, 4, 1, 30.0).unwrap();
    write_bundle(dir.path(), &stack).unwrap();
    let fuel = Grid::from_fn(4, 4, |r, c| if (r, c) == (1, 1) { 99 } else { 1 });
    emberline_core::gridfile::write_i32(&dir.path().join("fuel.grid"), &fuel).unwrap();
    let cfg = json!({
        "scenario": { "terrain": { "source": "files", "dir": dir.path() } },
        "environment": { "agent_start": [0, 0] }
    });
    let (status, e) = call(&app, "POST", "/sessions", Some(cfg)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(e["error"].as_str().unwrap().contains("99"), "{e}");
    assert!(FuelCatalog::standard().lookup(99).is_err());
}

#[tokio::test]
async fn mitigation_contract() {
    let app = app();
    let (id, _) = create(&app, config(1)).await;
    let uri = format!("/sessions/{id}/mitigations");

    let (s, d) = call(&app, "POST", &uri, Some(json!({ "cell": [2, 3], "kind": "fireline" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["revision"], 1);
    assert_eq!(d["changed"], json!([[2, 3, 3]]));
    assert_eq!(d["counts"]["mitigated"], 1);

    // no effect on a burning cell, but the revision moves
    let (_, d) = call(&app, "POST", &uri, Some(json!({ "cell": [12, 12], "kind": "wetline" }))).await;
    assert_eq!(d["revision"], 2);
    assert_eq!(d["changed"], json!([]));

    let (s, e) = call(&app, "POST", &uri, Some(json!({ "cell": [1, 1], "kind": "moat" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let msg = e["error"].as_str().unwrap();
    for m in Mitigation::ALL {
        assert!(msg.contains(m.name()), "{msg}");
    }
    let (s, _) = call(&app, "POST", &uri, Some(json!({ "cell": [24, 0], "kind": "fireline" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &uri, Some(json!({ "cell": [1] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/sessions/nope/mitigations", Some(json!({ "cell": [1, 1], "kind": "fireline" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    // rejected commands leave the revision alone
    let (_, st) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(st["revision"], 2);
}

#[tokio::test]
async fn advance_and_state_queries() {
    let app = app();
    let (id, d) = create(&app, config(2)).await;
    let initial = d["state"]["grid"].clone();
    let benchmark_burned = d["benchmark_total_burned"].as_u64().unwrap();
    for cell in ring(8, 16) {
        call(&app, "POST", &format!("/sessions/{id}/mitigations"), Some(json!({ "cell": cell, "kind": "fireline" }))).await;
    }
    let n = ring(8, 16).len() as u64;

    let (s, e) = call(&app, "POST", &format!("/sessions/{id}/advance"), Some(json!({ "steps": 0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{e}");

    let (s, r) = call(&app, "POST", &format!("/sessions/{id}/advance"), Some(json!({ "steps": 5000 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["revision"], n + 1);
    assert_eq!(r["active"], false);
    assert!(!r["changed"].as_array().unwrap().is_empty());
    let steps = r["steps"].as_array().unwrap();
    assert!(!steps.is_empty() && steps.len() < 5000);
    // the ring holds, so the saved share is what the benchmark burned outside it
    let burned_inside = r["counts"]["burned"].as_u64().unwrap();
    assert!(burned_inside <= 7 * 7);
    let expected = (benchmark_burned - burned_inside - n) as f64 / benchmark_burned as f64;
    assert!((r["saved_proportion"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!(expected > 0.0);

    // a quiesced fire is a fixed point
    let (_, again) = call(&app, "POST", &format!("/sessions/{id}/advance"), Some(json!({ "steps": 3 }))).await;
    assert_eq!(again["changed"], json!([]));
    assert_eq!(again["counts"], r["counts"]);
    assert_eq!(again["steps"], json!([]));

    let rev = again["revision"].as_u64().unwrap();
    let (_, d) = call(&app, "GET", &format!("/sessions/{id}/state?since={rev}"), None).await;
    assert_eq!(d["changed"], json!([]));
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/state?since={}", rev + 1), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/state?since=soon"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    // delta since 0 is exactly the diff against the initial grid
    let (_, full) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    let (_, delta) = call(&app, "GET", &format!("/sessions/{id}/state?since=0"), None).await;
    let mut diff = Vec::new();
    for r in 0..24 {
        for c in 0..24 {
            if full["grid"][r][c] != initial[r][c] {
                diff.push(json!([r, c, full["grid"][r][c]]));
            }
        }
    }
    assert_eq!(delta["changed"], Value::Array(diff));
}

#[tokio::test]
async fn sessions_are_isolated_and_deletable() {
    let app = app();
    let (a, _) = create(&app, config(3)).await;
    let (b, _) = create(&app, config(3)).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{b}/state"), None).await;
    call(&app, "POST", &format!("/sessions/{a}/mitigations"), Some(json!({ "cell": [0, 0], "kind": "fireline" }))).await;
    call(&app, "POST", &format!("/sessions/{a}/advance"), Some(json!({ "steps": 4 }))).await;
    let (_, after) = call(&app, "GET", &format!("/sessions/{b}/state"), None).await;
    assert_eq!(before, after);

    let (s, _) = call(&app, "DELETE", &format!("/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&app, "GET", &format!("/sessions/{a}/state"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "DELETE", &format!("/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn same_command_log_gives_identical_payloads() {
    let app = app();
    let (a, _) = create(&app, config(4)).await;
    let (b, _) = create(&app, config(4)).await;
    let script = [
        ("mitigations", json!({ "cell": [10, 10], "kind": "scratchline" })),
        ("advance", json!({ "steps": 6 })),
        ("mitigations", json!({ "cell": [14, 14], "kind": "wetline" })),
        ("advance", json!({ "steps": 20 })),
    ];
    for (path, body) in &script {
        let (_, ra) = call(&app, "POST", &format!("/sessions/{a}/{path}"), Some(body.clone())).await;
        let (_, rb) = call(&app, "POST", &format!("/sessions/{b}/{path}"), Some(body.clone())).await;
        assert_eq!(ra.to_string(), rb.to_string());
    }
}

/// Reads SSE `delta` events until `timeout` passes without one.
async fn read_events(body: Body, want: usize, timeout: Duration) -> Vec<Value> {
    let mut stream = body.into_data_stream();
    let mut buf = String::new();
    let mut events = Vec::new();
    while events.len() < want {
        match tokio::time::timeout(timeout, stream.next()).await {
            Ok(Some(Ok(chunk))) => buf.push_str(std::str::from_utf8(&chunk).unwrap()),
            _ => break,
        }
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            if let Some(data) = block.lines().find_map(|l| l.strip_prefix("data:")) {
                events.push(serde_json::from_str(data.trim()).unwrap());
            }
        }
    }
    events
}

async fn subscribe(app: &Router, id: &str) -> Body {
    let req = Request::builder().uri(format!("/sessions/{id}/stream")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    resp.into_body()
}

#[tokio::test]
async fn stream_publishes_each_mutation_to_every_subscriber() {
    let app = app();
    let (id, _) = create(&app, config(5)).await;
    let s1 = subscribe(&app, &id).await;
    let s2 = subscribe(&app, &id).await;
    let r1 = tokio::spawn(read_events(s1, 2, Duration::from_secs(5)));
    let r2 = tokio::spawn(read_events(s2, 2, Duration::from_secs(5)));

    let (_, d1) = call(&app, "POST", &format!("/sessions/{id}/mitigations"), Some(json!({ "cell": [3, 3], "kind": "fireline" }))).await;
    // give subscribers time to drain so the next message is not coalesced
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (_, d2) = call(&app, "POST", &format!("/sessions/{id}/advance"), Some(json!({ "steps": 2 }))).await;

    let e1 = r1.await.unwrap();
    let e2 = r2.await.unwrap();
    assert_eq!(e1, e2);
    assert_eq!(e1.len(), 2);
    assert_eq!(e1[0]["revision"], d1["revision"]);
    assert_eq!(e1[0]["changed"], d1["changed"]);
    assert_eq!(e1[1]["changed"], d2["changed"]);
    assert_eq!(e1[1]["counts"], d2["counts"]);
}

#[tokio::test]
async fn quiet_sessions_stream_nothing_and_deletion_closes_streams() {
    let app = app();
    let (id, _) = create(&app, config(6)).await;
    let body = subscribe(&app, &id).await;
    let reader = tokio::spawn(read_events(body, 1, Duration::from_secs(5)));
    tokio::time::sleep(Duration::from_millis(200)).await;
    assert!(!reader.is_finished());
    call(&app, "DELETE", &format!("/sessions/{id}"), None).await;
    let events = tokio::time::timeout(Duration::from_secs(2), reader).await.expect("stream closed").unwrap();
    assert!(events.is_empty());
}

#[tokio::test]
async fn slow_subscribers_get_coalesced_deltas_in_order() {
    let app = app();
    let (id, d0) = create(&app, config(7)).await;
    let body = subscribe(&app, &id).await;
    for c in 0..5 {
        call(&app, "POST", &format!("/sessions/{id}/mitigations"), Some(json!({ "cell": [0, c], "kind": "fireline" }))).await;
    }
    let events = read_events(body, 5, Duration::from_millis(300)).await;
    assert!(!events.is_empty());
    let revs: Vec<u64> = events.iter().map(|e| e["revision"].as_u64().unwrap()).collect();
    assert!(revs.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*revs.last().unwrap(), 5);
    // applying every delta to the initial grid reproduces the state
    let mut grid = d0["state"]["grid"].clone();
    for e in &events {
        for ch in e["changed"].as_array().unwrap() {
            let (r, c) = (ch[0].as_u64().unwrap() as usize, ch[1].as_u64().unwrap() as usize);
            grid[r][c] = ch[2].clone();
        }
    }
    let (_, full) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(grid, full["grid"]);
}

#[tokio::test]
async fn command_logs_replay_to_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(config(8), Some(dir.path().to_path_buf()), Duration::from_secs(600)));
    // the server's base config makes an empty body valid
    let (status, d) = call(&app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = d["id"].as_str().unwrap();
    for (path, body) in [
        ("mitigations", json!({ "cell": [9, 9], "kind": "fireline" })),
        ("advance", json!({ "steps": 7 })),
        ("mitigations", json!({ "cell": [15, 15], "kind": "scratchline" })),
        ("advance", json!({ "steps": 30 })),
    ] {
        call(&app, "POST", &format!("/sessions/{id}/{path}"), Some(body)).await;
    }
    let (_, live) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    let replayed = emberline_cli::commands::replay_log(&dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(live.to_string(), replayed.to_string());

    // and directly through the core session type
    let mut s = Session::new(RunConfig::from_json_str(&config(8).to_string()).unwrap()).unwrap();
    s.mitigate((9, 9), Mitigation::Fireline).unwrap();
    s.advance(7).unwrap();
    s.mitigate((15, 15), Mitigation::Scratchline).unwrap();
    s.advance(30).unwrap();
    assert_eq!(serde_json::to_value(s.full_state()).unwrap().to_string(), live.to_string());
}

#[tokio::test]
async fn idle_sessions_expire() {
    let state = AppState::new(json!({}), None, Duration::from_millis(1));
    let app = router(state.clone());
    let (id, _) = create(&app, config(9)).await;
    assert_eq!(state.session_count(), 1);
    let gone = state.purge_idle(std::time::Instant::now() + Duration::from_secs(1));
    assert_eq!(gone, vec![id.clone()]);
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
