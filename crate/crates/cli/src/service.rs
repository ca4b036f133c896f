//! HTTP backend of the operator console.
//!
//! All bodies are JSON except `GET .../log`, which returns the episode log
//! text. Errors are `{"error": message, "kind": kind}` with status 400
//! (bad request), 404 (unknown session or scenario), 409 (episode done),
//! 422 (malformed action or incompatible checkpoint) or 500.
//!
//! | method | path | body / response |
//! |---|---|---|
//! | GET | `/api/config` | controller and environment settings |
//! | GET | `/api/scenarios` | grids with their chronics and checkpoints |
//! | POST | `/api/sessions` | [`CreateSession`] -> `{"id"}` |
//! | GET | `/api/sessions/{id}/state` | [`SessionState`] |
//! | POST | `/api/sessions/{id}/simulate` | `{"action"}` -> simulation result |
//! | GET | `/api/sessions/{id}/recommendation` | controller decision |
//! | POST | `/api/sessions/{id}/step` | `{"action": "accept" or action}` -> step outcome |
//! | GET | `/api/sessions/{id}/events` | server-sent `step` events |
//! | GET | `/api/sessions/{id}/log` | episode log text |
//! | DELETE | `/api/sessions/{id}` | ends the session |
//!
//! Requests on one session are serialized by its mutex; sessions share
//! nothing mutable.

use crate::cli::ServeArgs;
use crate::data::{load_catalog, ScenarioDir};
use crate::error::CliError;
use crate::session::{Session, SessionError, SessionSpec, StepOutcome, StepRequest};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::Stream;
use powrl_core::controller::{ControllerConfig, Decision};
use powrl_core::environment::{Action, EnvConfig, Observation, SimulationResult};
use powrl_core::evaluation::AgentKind;
use powrl_core::scenario::load_checkpoint;
use powrl_core::scenario::log::StepRecord;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};
use tokio::sync::broadcast;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub env: EnvConfig,
    pub controller: ControllerConfig,
    pub idle_timeout: Duration,
    pub log_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            env: EnvConfig::default(),
            controller: ControllerConfig::default(),
            idle_timeout: Duration::from_secs(1800),
            log_dir: None,
        }
    }
}

struct Slot {
    session: Mutex<Session>,
    events: broadcast::Sender<String>,
    last_used: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.last_used.lock().expect("clock lock") = Instant::now();
    }
}

pub struct AppState {
    catalog: Vec<ScenarioDir>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    next_id: AtomicU64,
    cfg: ServiceConfig,
}

impl AppState {
    pub fn new(catalog: Vec<ScenarioDir>, cfg: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState { catalog, sessions: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1), cfg })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session table").len()
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        let slot = self.sessions.read().expect("session table").get(id).cloned();
        let slot = slot.ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`")))?;
        slot.touch();
        Ok(slot)
    }

    fn persist(&self, id: &str, session: &Session) {
        let Some(dir) = &self.cfg.log_dir else { return };
        let path = dir.join(format!("{id}.log"));
        if let Err(e) = std::fs::create_dir_all(dir).map_err(|e| e.to_string()).and_then(|_| {
            session.log().save(&path).map_err(|e| e.to_string())
        }) {
            log::error!("could not write {}: {e}", path.display());
        }
    }

    /// Drops sessions idle for longer than the configured timeout; returns
    /// how many were dropped.
    pub fn evict_idle(&self, now: Instant) -> usize {
        let mut table = self.sessions.write().expect("session table");
        let stale: Vec<String> = table
            .iter()
            .filter(|(_, s)| now.saturating_duration_since(*s.last_used.lock().expect("clock lock")) > self.cfg.idle_timeout)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &stale {
            if let Some(slot) = table.remove(id) {
                log::info!("session {id} evicted after idling");
                if let Ok(s) = slot.session.lock() {
                    self.persist(id, &s);
                }
            }
        }
        stale.len()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into() }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Done => ApiError::new(StatusCode::CONFLICT, "episode_done", e.to_string()),
            SessionError::Malformed(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_action", e.to_string()),
            SessionError::Setup(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_session", e.to_string()),
            SessionError::Runtime(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message, "kind": self.kind }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs `f` on the session off the async executor.
async fn with_session<T: Send + 'static>(
    slot: Arc<Slot>,
    f: impl FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut guard = slot
            .session
            .lock()
            .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "session state poisoned"))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Serialize)]
struct ConfigBody<'a> {
    controller: &'a ControllerConfig,
    env: &'a EnvConfig,
    idle_timeout_secs: u64,
}

async fn config(State(app): State<Arc<AppState>>) -> impl IntoResponse {
    Json(serde_json::to_value(ConfigBody {
        controller: &app.cfg.controller,
        env: &app.cfg.env,
        idle_timeout_secs: app.cfg.idle_timeout.as_secs(),
    })
    .expect("config serializes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronicInfo {
    pub id: String,
    pub steps: usize,
    pub start: String,
    pub maintenance: usize,
    pub attack_targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub grid: String,
    pub substations: usize,
    pub lines: usize,
    pub actions: Option<usize>,
    pub checkpoints: Vec<String>,
    pub chronics: Vec<ChronicInfo>,
}

async fn scenarios(State(app): State<Arc<AppState>>) -> Json<Vec<ScenarioInfo>> {
    Json(
        app.catalog
            .iter()
            .map(|d| ScenarioInfo {
                grid: d.grid.name.clone(),
                substations: d.grid.n_substations(),
                lines: d.grid.n_lines(),
                actions: d.actions.as_ref().map(|a| a.len()),
                checkpoints: d.checkpoints.clone(),
                chronics: d
                    .chronics
                    .iter()
                    .map(|c| ChronicInfo {
                        id: c.id.clone(),
                        steps: c.steps(),
                        start: c.start.format("%Y-%m-%dT%H:%M:%S").to_string(),
                        maintenance: c.maintenance.len(),
                        attack_targets: c.opponent.targets.clone(),
                    })
                    .collect(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub grid: String,
    pub chronic: String,
    #[serde(default)]
    pub seed: u64,
    /// File name under the scenario's `checkpoints/`; selects the powrl agent.
    #[serde(default)]
    pub checkpoint: Option<String>,
    /// Defaults to powrl with a checkpoint, else expert_heuristic.
    #[serde(default)]
    pub agent: Option<AgentKind>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let Json(req) = body?;
    let not_found = |m: String| ApiError::new(StatusCode::NOT_FOUND, "not_found", m);
    let dir = app
        .catalog
        .iter()
        .find(|d| d.grid.name == req.grid)
        .ok_or_else(|| not_found(format!("no grid `{}`", req.grid)))?;
    let chronic = dir.chronic(&req.chronic).ok_or_else(|| not_found(format!("no chronic `{}`", req.chronic)))?.clone();
    let actions = dir.actions.clone().ok_or_else(|| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_session", format!("grid `{}` has no action set", req.grid))
    })?;
    let params = match &req.checkpoint {
        Some(name) => {
            let path = dir.checkpoint_path(name).ok_or_else(|| not_found(format!("no checkpoint `{name}`")))?;
            let ck = load_checkpoint(&path)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_session", e.to_string()))?;
            Some(Arc::new(ck.params))
        }
        None => None,
    };
    let agent = req.agent.unwrap_or(if params.is_some() { AgentKind::Powrl } else { AgentKind::ExpertHeuristic });
    let spec = SessionSpec {
        grid: dir.grid.clone(),
        chronic,
        actions,
        agent,
        params,
        env: app.cfg.env.clone(),
        controller: app.cfg.controller.clone(),
        seed: req.seed,
    };
    let session = tokio::task::spawn_blocking(move || Session::new(spec))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let (events, _) = broadcast::channel(256);
    let slot = Arc::new(Slot { session: Mutex::new(session), events, last_used: Mutex::new(Instant::now()) });
    app.sessions.write().expect("session table").insert(id.clone(), slot);
    log::info!("session {id} created on {}/{} (agent {}, seed {})", req.grid, req.chronic, agent.as_str(), req.seed);
    Ok((StatusCode::CREATED, Json(Created { id })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub grid: String,
    pub chronic: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub time_step: usize,
    pub done: bool,
    pub state_hash: u64,
    pub observation: Observation,
    pub history: Vec<StepRecord>,
}

async fn state(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionState> {
    let slot = app.slot(&id)?;
    with_session(slot, move |s| {
        let spec = s.spec();
        Ok(Json(SessionState {
            id,
            grid: spec.grid.name.clone(),
            chronic: spec.chronic.id.clone(),
            agent: spec.agent,
            seed: spec.seed,
            time_step: s.env().time_step(),
            done: s.is_done(),
            state_hash: s.state_hash(),
            observation: s.env().observation(),
            history: s.log().records.clone(),
        }))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateBody {
    pub action: Action,
}

async fn simulate(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SimulateBody>, JsonRejection>,
) -> ApiResult<SimulationResult> {
    let slot = app.slot(&id)?;
    let Json(body) = body?;
    with_session(slot, move |s| Ok(Json(s.simulate(&body.action)?))).await
}

async fn recommendation(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Decision> {
    let slot = app.slot(&id)?;
    with_session(slot, |s| Ok(Json(s.recommendation()?))).await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepBody {
    pub action: StepRequest,
}

async fn step(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<StepBody>, JsonRejection>,
) -> ApiResult<StepOutcome> {
    let slot = app.slot(&id)?;
    let Json(body) = body?;
    let events = slot.events.clone();
    let app2 = app.clone();
    with_session(slot, move |s| {
        let outcome = s.step(&body.action)?;
        if let Ok(text) = serde_json::to_string(&outcome) {
            // no subscribers is fine
            let _ = events.send(text);
        }
        if s.is_done() {
            app2.persist(&id, s);
        }
        Ok(Json(outcome))
    })
    .await
}

async fn events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let rx = app.slot(&id)?.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(text) => return Some((Ok(Event::default().event("step").data(text)), rx)),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let note = Event::default().event("lagged").data(n.to_string());
                    return Some((Ok(note), rx));
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn episode_log(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let text = with_session(slot, |s| Ok(s.log().to_text())).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let slot = app.sessions.write().expect("session table").remove(&id);
    let slot = slot.ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`")))?;
    if let Ok(s) = slot.session.lock() {
        app.persist(&id, &s);
    }
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/config", get(config))
        .route("/api/scenarios", get(scenarios))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", axum::routing::delete(delete_session))
        .route("/api/sessions/{id}/state", get(state))
        .route("/api/sessions/{id}/simulate", post(simulate))
        .route("/api/sessions/{id}/recommendation", get(recommendation))
        .route("/api/sessions/{id}/step", post(step))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/log", get(episode_log))
        .with_state(app)
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let catalog = load_catalog(&args.data)?;
    let cfg = ServiceConfig {
        idle_timeout: Duration::from_secs(args.idle_timeout_secs.max(1)),
        log_dir: args.log_dir.clone(),
        ..ServiceConfig::default()
    };
    let app = AppState::new(catalog, cfg);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {}: {e}", args.addr)))?;
        log::info!("listening on {}", args.addr);
        println!("listening on http://{}", args.addr);
        let sweeper = app.clone();
        let period = (sweeper.cfg.idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                sweeper.evict_idle(Instant::now());
            }
        });
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}
