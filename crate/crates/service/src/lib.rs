//! HTTP service over the allocation core: scenario management, asynchronous
//! optimisation jobs and plan/KPI retrieval.
//!
//! | route | result |
//! |---|---|
//! | `POST /scenarios` | 201 `{scenario_id, name, report}`; 400 unparsable; 422 invalid |
//! | `GET /scenarios`, `GET /scenarios/{id}` | stored scenarios with their check report |
//! | `POST /optimize` | 202 job record |
//! | `GET /jobs/{id}`, `DELETE /jobs/{id}` | job record; cancel (409 once terminal) |
//! | `GET /plans/{id}` | plan file, byte-identical on every read |
//! | `GET /plans/{id}/kpis` | impact report, objective breakdown, source usage |
//! | `GET /plans/{id}/deficits?granularity=&by=` | deficit series |
//! | `GET /plans/{id}/allocations?unit=` | per-source supply rows |
//! | `GET /healthz` | name and version |
//!
//! Jobs run FIFO with at most `max_parallel_jobs` solves at once. A plan is
//! stored only after the network simulation audit accepts it, so no 2xx
//! response ever carries an unaudited or partial plan.

pub mod jobs;
pub mod store;

use std::collections::BTreeMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use basin_alloc::io::{data_dir, parse_scenario, plan_from_str, plan_to_string, resimulate, LoadError, LoadOptions};
use basin_alloc::report::{allocation_rows, deficit_view, kpi_view, Granularity, GroupBy};
use basin_alloc::{optimize, AllocationPlan, OptimizeError, OptimizeOptions, Scenario};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{mpsc, Semaphore};

use crate::jobs::{JobRecord, JobRequest, JobState, JobTable};
use crate::store::Store;

/// Scenario bodies carry inline series; allow generous request sizes.
const BODY_LIMIT: usize = 64 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Root of the content-addressed store.
    pub store_dir: PathBuf,
    /// Base directory for CSV side files referenced by posted scenarios.
    pub data_dir: PathBuf,
    pub max_parallel_jobs: usize,
}

impl ServiceConfig {
    pub fn new(store_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            store_dir: store_dir.into(),
            data_dir: data_dir(),
            max_parallel_jobs: std::thread::available_parallelism().map_or(1, usize::from),
        }
    }
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Unprocessable(Value),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Unprocessable(v) => (StatusCode::UNPROCESSABLE_ENTITY, v),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({ "error": m })),
            ApiError::Internal(m) => {
                log::error!("internal error: {m}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": "internal error" }))
            }
        };
        (status, Json(body)).into_response()
    }
}

impl From<io::Error> for ApiError {
    fn from(e: io::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct QueuedJob {
    id: String,
    scenario: Arc<Scenario>,
    options: OptimizeOptions,
}

struct App {
    config: ServiceConfig,
    store: Store,
    jobs: Mutex<JobTable>,
    scenarios: Mutex<BTreeMap<String, Arc<Scenario>>>,
    queue: mpsc::UnboundedSender<QueuedJob>,
}

impl App {
    fn scenario(&self, id: &str) -> ApiResult<Arc<Scenario>> {
        if let Some(s) = self.scenarios.lock().expect("scenario cache").get(id) {
            return Ok(s.clone());
        }
        let s = Arc::new(
            self.store
                .scenario(id)?
                .ok_or_else(|| ApiError::NotFound(format!("no scenario `{id}`")))?,
        );
        self.scenarios.lock().expect("scenario cache").insert(id.to_owned(), s.clone());
        Ok(s)
    }

    fn plan_text(&self, id: &str) -> ApiResult<String> {
        self.store
            .plan_text(id)?
            .ok_or_else(|| ApiError::NotFound(format!("no plan `{id}`")))
    }

    fn plan(&self, id: &str) -> ApiResult<AllocationPlan> {
        let text = self.plan_text(id)?;
        plan_from_str(&text)
            .map(|f| f.plan)
            .map_err(|e| ApiError::Internal(format!("stored plan {id}: {e}")))
    }

    /// Applies a state transition and persists the record.
    fn transition(&self, id: &str, to: JobState, plan_id: Option<String>, error: Option<String>) -> Option<JobRecord> {
        let mut jobs = self.jobs.lock().expect("job table");
        let record = jobs.transition(id, to, plan_id, error).ok()?;
        if let Err(e) = self.store.put_job(&record) {
            log::error!("persisting {id}: {e}");
        }
        Some(record)
    }
}

/// Opens (or creates) the store and returns the router. Must be called
/// inside a Tokio runtime: it starts the job dispatcher.
pub fn app(config: ServiceConfig) -> io::Result<Router> {
    let store = Store::open(&config.store_dir)?;
    let (table, interrupted) = JobTable::restore(store.jobs()?);
    for r in &interrupted {
        store.put_job(r)?;
    }
    let (tx, rx) = mpsc::unbounded_channel();
    let app = Arc::new(App {
        config,
        store,
        jobs: Mutex::new(table),
        scenarios: Mutex::new(BTreeMap::new()),
        queue: tx,
    });
    tokio::spawn(dispatch(app.clone(), rx));
    Ok(Router::new()
        .route("/healthz", get(healthz))
        .route("/scenarios", post(post_scenario).get(list_scenarios))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/optimize", post(post_optimize))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/plans/{id}", get(get_plan))
        .route("/plans/{id}/kpis", get(get_kpis))
        .route("/plans/{id}/deficits", get(get_deficits))
        .route("/plans/{id}/allocations", get(get_allocations))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(app))
}

/// Serves on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> io::Result<()> {
    let router = app(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router).await
}

/// Starts queued jobs in submission order as solver slots free up.
async fn dispatch(app: Arc<App>, mut rx: mpsc::UnboundedReceiver<QueuedJob>) {
    let slots = Arc::new(Semaphore::new(app.config.max_parallel_jobs.max(1)));
    while let Some(job) = rx.recv().await {
        let permit = slots.clone().acquire_owned().await.expect("semaphore is never closed");
        let app = app.clone();
        tokio::spawn(async move {
            run_job(&app, job).await;
            drop(permit);
        });
    }
}

enum Outcome {
    Done(String),
    Failed(String),
    Cancelled,
}

async fn run_job(app: &Arc<App>, job: QueuedJob) {
    // A job cancelled while queued has already left the queued state.
    if app.transition(&job.id, JobState::Running, None, None).is_none() {
        return;
    }
    let worker = app.clone();
    let cancelled = job.options.control.clone().expect("jobs carry a control handle");
    let outcome = tokio::task::spawn_blocking(move || solve_and_store(&worker.store, &job.scenario, &job.options))
        .await
        .unwrap_or_else(|e| Outcome::Failed(format!("worker stopped: {e}")));
    // A cancel that raced a finishing solve still wins: no plan is attached.
    let outcome = if cancelled.is_cancelled() { Outcome::Cancelled } else { outcome };
    match outcome {
        Outcome::Done(plan_id) => app.transition(&job.id, JobState::Done, Some(plan_id), None),
        Outcome::Failed(msg) => app.transition(&job.id, JobState::Failed, None, Some(msg)),
        Outcome::Cancelled => app.transition(&job.id, JobState::Cancelled, None, None),
    };
}

fn solve_and_store(store: &Store, scenario: &Scenario, options: &OptimizeOptions) -> Outcome {
    let plan = match optimize(scenario, options) {
        Ok(p) => p,
        Err(OptimizeError::Cancelled) => return Outcome::Cancelled,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    match resimulate(&plan, scenario) {
        Ok(r) if r.feasible => {}
        Ok(r) => {
            return Outcome::Failed(format!(
                "plan rejected by the simulation audit (max residual {:.3e})",
                r.max_abs_residual
            ))
        }
        Err(e) => return Outcome::Failed(format!("plan rejected by the simulation audit: {e}")),
    }
    match store.put_plan(&plan_to_string(&plan)) {
        Ok(id) => Outcome::Done(id),
        Err(e) => Outcome::Failed(format!("storing plan: {e}")),
    }
}

async fn healthz() -> Json<Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn post_scenario(State(app): State<Arc<App>>, body: String) -> ApiResult<(StatusCode, Json<Value>)> {
    let loaded = match parse_scenario(&body, Some(&app.config.data_dir), LoadOptions::default()) {
        Ok(l) => l,
        Err(e @ LoadError::Parse { .. }) => return Err(ApiError::BadRequest(e.to_string())),
        Err(LoadError::Validation(report)) => {
            return Err(ApiError::Unprocessable(json!({ "error": "scenario failed validation", "report": report })))
        }
        Err(LoadError::UnknownFields(fields)) => {
            return Err(ApiError::Unprocessable(json!({ "error": "unknown fields", "fields": fields })))
        }
        Err(e) => return Err(ApiError::Unprocessable(json!({ "error": e.to_string() }))),
    };
    let id = app.store.put_scenario(&loaded.scenario)?;
    let name = loaded.scenario.name.clone();
    app.scenarios
        .lock()
        .expect("scenario cache")
        .insert(id.clone(), Arc::new(loaded.scenario));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "scenario_id": id, "name": name, "report": loaded.report })),
    ))
}

fn scenario_summary(id: &str, s: &Scenario) -> Value {
    let report = s.validate();
    json!({
        "scenario_id": id,
        "name": s.name,
        "horizon": s.horizon,
        "valid": report.is_ok(),
        "report": report,
    })
}

async fn list_scenarios(State(app): State<Arc<App>>) -> ApiResult<Json<Value>> {
    let mut out = Vec::new();
    for id in app.store.scenario_ids()? {
        out.push(scenario_summary(&id, &*app.scenario(&id)?));
    }
    Ok(Json(Value::Array(out)))
}

async fn get_scenario(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let s = app.scenario(&id)?;
    let mut v = scenario_summary(&id, &s);
    v["scenario"] = serde_json::to_value(&*s).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(v))
}

async fn post_optimize(
    State(app): State<Arc<App>>,
    Json(req): Json<JobRequest>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let scenario = app.scenario(&req.scenario_id)?;
    let weights = req.weights.unwrap_or(scenario.weights);
    let bad = |m: String| ApiError::Unprocessable(json!({ "error": m }));
    weights.validate().map_err(bad)?;
    if let Some(d) = req.horizon_days {
        if d == 0 || d > scenario.horizon.days {
            return Err(bad(format!("horizon_days must lie in 1..={}", scenario.horizon.days)));
        }
    }
    if req.segments == Some(0) {
        return Err(bad("segments must be at least 1".into()));
    }
    let (record, control) = {
        let mut jobs = app.jobs.lock().expect("job table");
        let (record, control) = jobs.submit(&req, weights);
        app.store.put_job(&record)?;
        (record, control)
    };
    let options = OptimizeOptions {
        weights: Some(weights),
        horizon_days: req.horizon_days,
        segments: req.segments,
        lexicographic: req.lexicographic,
        control: Some(control),
        ..OptimizeOptions::default()
    };
    app.queue
        .send(QueuedJob {
            id: record.job_id.clone(),
            scenario,
            options,
        })
        .map_err(|_| ApiError::Internal("job dispatcher stopped".into()))?;
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn get_job(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    app.jobs
        .lock()
        .expect("job table")
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("no job `{id}`")))
}

async fn cancel_job(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let (state, control) = {
        let jobs = app.jobs.lock().expect("job table");
        let record = jobs.get(&id).ok_or_else(|| ApiError::NotFound(format!("no job `{id}`")))?;
        (record.state, jobs.control(&id).expect("record has a control"))
    };
    if state.is_terminal() {
        return Err(ApiError::Conflict(format!("job `{id}` is already {state:?}").to_lowercase()));
    }
    control.cancel();
    if state == JobState::Queued {
        app.transition(&id, JobState::Cancelled, None, None);
    }
    let record = app.jobs.lock().expect("job table").get(&id).expect("job exists");
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn get_plan(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = app.plan_text(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn get_kpis(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let plan = app.plan(&id)?;
    serde_json::to_value(kpi_view(&plan))
        .map(Json)
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Debug, Deserialize)]
struct DeficitQuery {
    granularity: Option<String>,
    by: Option<String>,
}

async fn get_deficits(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Query(q): Query<DeficitQuery>,
) -> ApiResult<Json<Value>> {
    let g: Granularity = q.granularity.as_deref().unwrap_or("daily").parse().map_err(ApiError::BadRequest)?;
    let by: GroupBy = q.by.as_deref().unwrap_or("kind").parse().map_err(ApiError::BadRequest)?;
    let plan = app.plan(&id)?;
    serde_json::to_value(deficit_view(&plan, g, by))
        .map(Json)
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Debug, Deserialize)]
struct AllocationQuery {
    unit: Option<String>,
}

async fn get_allocations(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Query(q): Query<AllocationQuery>,
) -> ApiResult<Json<Value>> {
    let plan = app.plan(&id)?;
    let rows = allocation_rows(&plan, q.unit.as_deref());
    if rows.is_empty() {
        if let Some(u) = q.unit {
            return Err(ApiError::NotFound(format!("no unit or kind `{u}` in plan `{id}`")));
        }
    }
    serde_json::to_value(rows)
        .map(Json)
        .map_err(|e| ApiError::Internal(e.to_string()))
}
