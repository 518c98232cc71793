use std::fs;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use basin_alloc::io::{data_dir, plan_from_str};
use basin_service::{app, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn tiny_text() -> String {
    fs::read_to_string(data_dir().join("tiny.scenario")).unwrap()
}

fn segura_text() -> String {
    fs::read_to_string(data_dir().join("segura-6m.scenario")).unwrap()
}

fn config(dir: &tempfile::TempDir) -> ServiceConfig {
    let mut c = ServiceConfig::new(dir.path());
    c.max_parallel_jobs = 2;
    c
}

async fn call(router: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(router: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let (status, bytes) = call(router, method, uri, body).await;
    let v = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes)));
    (status, v)
}

async fn post_scenario(router: &Router, text: String) -> String {
    let (status, v) = call_json(router, Method::POST, "/scenarios", Some(text)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["scenario_id"].as_str().unwrap().to_owned()
}

async fn submit(router: &Router, body: Value) -> String {
    let (status, v) = call_json(router, Method::POST, "/optimize", Some(body.to_string())).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["state"], "queued");
    v["job_id"].as_str().unwrap().to_owned()
}

async fn wait_for(router: &Router, job: &str, done: impl Fn(&str) -> bool, limit: Duration) -> Value {
    let t = Instant::now();
    loop {
        let (status, v) = call_json(router, Method::GET, &format!("/jobs/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if done(v["state"].as_str().unwrap()) {
            return v;
        }
        assert!(t.elapsed() < limit, "job {job} stuck in {}", v["state"]);
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

fn terminal(s: &str) -> bool {
    matches!(s, "done" | "failed" | "cancelled")
}

#[tokio::test]
async fn health_reports_name_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let router = app(config(&dir)).unwrap();
    let (status, v) = call_json(&router, Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn scenarios_are_validated_stored_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    let router = app(config(&dir)).unwrap();
    let id = post_scenario(&router, tiny_text()).await;
    assert_eq!(post_scenario(&router, tiny_text()).await, id, "content addressed");

    let (status, list) = call_json(&router, Method::GET, "/scenarios", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["valid"], true);

    let (status, one) = call_json(&router, Method::GET, &format!("/scenarios/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(one["name"], "tiny");
    assert_eq!(one["scenario"]["horizon"]["days"], 15);

    let broken = tiny_text().replace("\"to\": \"town\"", "\"to\": \"village\"");
    let (status, v) = call_json(&router, Method::POST, "/scenarios", Some(broken)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!v["report"]["errors"].as_array().unwrap().is_empty(), "{v}");

    let unknown = tiny_text().replace("\"name\": \"tiny\",", "\"name\": \"tiny\", \"colour\": 1,");
    let (status, v) = call_json(&router, Method::POST, "/scenarios", Some(unknown)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"], json!(["colour"]));

    let (status, _) = call_json(&router, Method::POST, "/scenarios", Some("{ nope".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = call_json(&router, Method::GET, "/scenarios/0000000000000000", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tiny_job_runs_to_a_plan_with_no_deficit() {
    let dir = tempfile::tempdir().unwrap();
    let router = app(config(&dir)).unwrap();
    let id = post_scenario(&router, tiny_text()).await;
    let job = submit(
        &router,
        json!({ "scenario_id": id, "weights": { "deficit": 1.0, "economic": 0.0, "co2": 0.0 } }),
    )
    .await;
    let rec = wait_for(&router, &job, terminal, Duration::from_secs(30)).await;
    assert_eq!(rec["state"], "done", "{rec}");
    assert!(rec["progress"]["iterations"].as_u64().unwrap() > 0);
    let plan_id = rec["plan_id"].as_str().unwrap();

    let (status, first) = call(&router, Method::GET, &format!("/plans/{plan_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call(&router, Method::GET, &format!("/plans/{plan_id}"), None).await;
    assert_eq!(first, second, "repeated reads are byte-identical");
    let plan = plan_from_str(std::str::from_utf8(&first).unwrap()).unwrap().plan;
    assert_eq!(plan.aggregates.total_deficit, 0.0);
    assert!(plan.audit.feasible);

    let (status, kpis) = call_json(&router, Method::GET, &format!("/plans/{plan_id}/kpis"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(kpis["top_source"], "surface");
    assert_eq!(kpis["total_deficit"], 0.0);
    assert!(kpis["objective_breakdown"].is_object());
    assert!(kpis["impact"]["co2_total"].is_number());

    let (status, d) =
        call_json(&router, Method::GET, &format!("/plans/{plan_id}/deficits?granularity=weekly&by=unit"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(d["series"][0]["key"], "UDU01");
    assert_eq!(d["series"][0]["points"].as_array().unwrap().len(), 3);
    let (status, d) = call_json(&router, Method::GET, &format!("/plans/{plan_id}/deficits"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(d["series"][0]["points"].as_array().unwrap().len(), 15);
    let (status, _) =
        call_json(&router, Method::GET, &format!("/plans/{plan_id}/deficits?granularity=hourly"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, rows) =
        call_json(&router, Method::GET, &format!("/plans/{plan_id}/allocations?unit=UDU01"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rows[0]["unit"], "UDU01");
    assert!((rows[0]["by_source"]["surface"].as_f64().unwrap() - 1.5).abs() < 1e-9);
    let (status, _) = call_json(&router, Method::GET, &format!("/plans/{plan_id}/allocations?unit=UDU99"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // Cancelling a finished job conflicts; unknown ids are 404.
    let (status, _) = call_json(&router, Method::DELETE, &format!("/jobs/{job}"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call_json(&router, Method::DELETE, "/jobs/job-999999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call_json(&router, Method::GET, "/plans/ffffffffffffffff", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn requests_are_checked_before_queueing() {
    let dir = tempfile::tempdir().unwrap();
    let router = app(config(&dir)).unwrap();
    let id = post_scenario(&router, tiny_text()).await;
    let (status, _) =
        call_json(&router, Method::POST, "/optimize", Some(json!({ "scenario_id": "0000000000000000" }).to_string()))
            .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    for body in [
        json!({ "scenario_id": id, "weights": { "deficit": -1.0, "economic": 0.0, "co2": 0.0 } }),
        json!({ "scenario_id": id, "horizon_days": 99 }),
        json!({ "scenario_id": id, "segments": 0 }),
    ] {
        let (status, v) = call_json(&router, Method::POST, "/optimize", Some(body.to_string())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {v}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_jobs_are_isolated_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let router = app(config(&dir)).unwrap();
    let id = post_scenario(&router, tiny_text()).await;
    let weights = [
        json!({ "deficit": 1.0, "economic": 0.0, "co2": 0.0 }),
        json!({ "deficit": 0.5, "economic": 0.2, "co2": 0.3 }),
        json!({ "deficit": 1.0, "economic": 0.0, "co2": 0.0 }),
    ];
    let mut jobs = Vec::new();
    for w in &weights {
        jobs.push(submit(&router, json!({ "scenario_id": id, "weights": w, "horizon_days": 7 })).await);
    }
    let mut plans = Vec::new();
    for (job, w) in jobs.iter().zip(&weights) {
        let rec = wait_for(&router, job, terminal, Duration::from_secs(30)).await;
        assert_eq!(rec["state"], "done");
        assert_eq!(&rec["weights"], w, "weights are recorded unchanged");
        assert_eq!(rec["horizon_days"], 7);
        plans.push(rec["plan_id"].as_str().unwrap().to_owned());
    }
    assert_eq!(plans[0], plans[2], "identical requests give the identical plan");
    assert_ne!(plans[0], plans[1]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn infeasible_scenarios_fail_with_their_constraint_family() {
    let dir = tempfile::tempdir().unwrap();
    let router = app(config(&dir)).unwrap();
    let wetland = tiny_text()
        .replace("\"kind\": \"UDU\"", "\"kind\": \"WDU\"")
        .replace("\"availability\": 1.0", "\"availability\": 0.05");
    let id = post_scenario(&router, wetland).await;
    let job = submit(&router, json!({ "scenario_id": id })).await;
    let rec = wait_for(&router, &job, terminal, Duration::from_secs(30)).await;
    assert_eq!(rec["state"], "failed");
    assert!(rec["error"].as_str().unwrap().contains("wetland"), "{rec}");
    assert!(rec.get("plan_id").is_none());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn state_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, job, plan_id) = {
        let router = app(config(&dir)).unwrap();
        let id = post_scenario(&router, tiny_text()).await;
        let job = submit(&router, json!({ "scenario_id": id })).await;
        let rec = wait_for(&router, &job, terminal, Duration::from_secs(30)).await;
        (id, job, rec["plan_id"].as_str().unwrap().to_owned())
    };
    let router = app(config(&dir)).unwrap();
    let (status, _) = call_json(&router, Method::GET, &format!("/scenarios/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, rec) = call_json(&router, Method::GET, &format!("/jobs/{job}"), None).await;
    assert_eq!(rec["state"], "done");
    assert_eq!(rec["plan_id"], plan_id.as_str());
    let next = submit(&router, json!({ "scenario_id": id })).await;
    assert_ne!(next, job, "job ids keep counting after a restart");
}

/// The bundled basin: surface water leads the KPI payload, and a running
/// solve can be cancelled without leaving a plan behind.
#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn segura_kpis_and_cancellation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir);
    cfg.max_parallel_jobs = 1;
    let router = app(cfg).unwrap();
    let id = post_scenario(&router, segura_text()).await;
    let weights = json!({ "deficit": 0.6, "economic": 0.1, "co2": 0.3 });

    let full = submit(&router, json!({ "scenario_id": id, "weights": weights })).await;
    // Queued behind the first job; cancelled before it ever runs.
    let queued = submit(&router, json!({ "scenario_id": id, "weights": weights })).await;
    let (status, rec) = call_json(&router, Method::DELETE, &format!("/jobs/{queued}"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(rec["state"], "cancelled");

    let rec = wait_for(&router, &full, terminal, Duration::from_secs(300)).await;
    assert_eq!(rec["state"], "done", "{rec}");
    let plan_id = rec["plan_id"].as_str().unwrap();
    let (_, kpis) = call_json(&router, Method::GET, &format!("/plans/{plan_id}/kpis"), None).await;
    assert_eq!(kpis["top_source"], "surface");
    let (_, d) = call_json(&router, Method::GET, &format!("/plans/{plan_id}/deficits?granularity=monthly"), None).await;
    assert_eq!(d["series"].as_array().unwrap().len(), 5, "one series per demand kind");

    let running = submit(&router, json!({ "scenario_id": id, "weights": weights })).await;
    wait_for(&router, &running, |s| s != "queued", Duration::from_secs(30)).await;
    let (status, _) = call_json(&router, Method::DELETE, &format!("/jobs/{running}"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let rec = wait_for(&router, &running, terminal, Duration::from_secs(30)).await;
    assert_eq!(rec["state"], "cancelled");
    assert!(rec.get("plan_id").is_none());
}
