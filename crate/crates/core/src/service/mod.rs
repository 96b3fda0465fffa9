//! Session API for playing the user side against the live planner.
//!
//! Routes:
//! - `POST /sessions` `{scenario_id, dataset?, params?}`
//! - `POST /sessions/{id}/message` `{text, nonce, params?}`
//! - `GET /sessions/{id}`, `GET /sessions/{id}/stats`
//! - `GET /scenarios`, `GET /healthz`
//!
//! `params` objects are partial: their keys are merged over the current
//! parameters. Each session runs at most one turn at a time, and a turn
//! nonce that was already accepted is rejected with 409.

use std::collections::{HashMap, HashSet};
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::action::Dataset;
use crate::cli::Catalog;
use crate::dialogue::{DialogueState, Terminal};
use crate::env::{commit_system_reply, observe_user_reply, Environment};
use crate::eval::{EpisodeRecord, EpisodeWriter};
use crate::nrpa::{plan_next_act, SearchStats};
use crate::params::NrpaParams;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

/// Reports malformed request bodies in the same `{"error"}` shape as every
/// other failure.
fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(e.status(), e.body_text()))
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Terminal,
}

/// A live dialogue between a human (user side) and the planner.
#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub scenario_id: String,
    pub dataset: Dataset,
    pub params: NrpaParams,
    pub status: SessionStatus,
    pub created_at: u64,
    pub updated_at: u64,
    pub state: DialogueState,
    /// Search statistics of every planned system turn.
    pub stats: Vec<SearchStats>,
    /// Reward of the finished dialogue.
    pub reward: Option<f64>,
    pub rng_seed: u64,
    #[serde(skip)]
    rng: ChaCha8Rng,
    #[serde(skip)]
    nonces: HashSet<String>,
    pub in_flight: bool,
}

pub struct AppState {
    catalog: Catalog,
    default_params: NrpaParams,
    sessions: Mutex<HashMap<String, Session>>,
    order: Mutex<Vec<String>>,
    next_id: AtomicU64,
    planners: Semaphore,
    flush_path: Option<PathBuf>,
}

impl AppState {
    pub fn new(catalog: Catalog, default_params: NrpaParams, flush_path: Option<PathBuf>) -> Arc<Self> {
        Self::with_parallelism(catalog, default_params, flush_path, 4)
    }

    /// `parallel_turns` bounds how many sessions may plan at once.
    pub fn with_parallelism(
        catalog: Catalog,
        default_params: NrpaParams,
        flush_path: Option<PathBuf>,
        parallel_turns: usize,
    ) -> Arc<Self> {
        Arc::new(AppState {
            catalog,
            default_params,
            sessions: Mutex::new(HashMap::new()),
            order: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(1),
            planners: Semaphore::new(parallel_turns.max(1)),
            flush_path,
        })
    }

    fn env(&self, scenario_id: &str) -> Option<(Arc<dyn Environment>, Dataset)> {
        self.catalog
            .get(scenario_id)
            .map(|e| (e.env.clone(), e.dataset))
    }

    /// Every session as an episode record, in creation order. Unfinished
    /// dialogues are marked aborted so graders skip them.
    pub fn records(&self) -> Vec<EpisodeRecord> {
        let sessions = self.sessions.lock().expect("sessions lock");
        let order = self.order.lock().expect("order lock");
        order
            .iter()
            .filter_map(|id| sessions.get(id))
            .map(|s| {
                let entry = self.catalog.get(&s.scenario_id);
                let spec = entry.map(|e| e.env.reward_spec().clone()).unwrap_or_default();
                let mut r = EpisodeRecord::from_dialogue(&s.state, s.stats.clone(), &s.params, &spec, s.rng_seed);
                r.dataset = Some(s.dataset);
                r.price_targets = entry.and_then(|e| e.price_targets);
                if s.state.is_ongoing() {
                    r.aborted = Some("session closed before the dialogue ended".into());
                    r.reward = None;
                }
                r
            })
            .collect()
    }

    /// Appends every session to the flush file, if one is configured.
    pub fn flush(&self) -> std::io::Result<usize> {
        let Some(path) = &self.flush_path else { return Ok(0) };
        let records = self.records();
        let mut w = EpisodeWriter::append(path).map_err(std::io::Error::other)?;
        for r in &records {
            w.write(r).map_err(std::io::Error::other)?;
        }
        Ok(records.len())
    }
}

fn merge_params(base: &NrpaParams, patch: Option<&Value>) -> Result<NrpaParams, ApiError> {
    let Some(patch) = patch else { return Ok(base.clone()) };
    let Value::Object(fields) = patch else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "params must be an object"));
    };
    let mut merged = serde_json::to_value(base).expect("params serialize");
    for (k, v) in fields {
        merged[k] = v.clone();
    }
    let params: NrpaParams = serde_json::from_value(merged)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("params: {e}")))?;
    params
        .validate()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("params: {e}")))?;
    Ok(params)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub scenario_id: String,
    #[serde(default)]
    pub dataset: Option<Dataset>,
    #[serde(default)]
    pub params: Option<Value>,
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub id: String,
    pub opening_message: String,
    pub session: Session,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req = body(payload)?;
    let (env, dataset) = app.env(&req.scenario_id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown scenario `{}`", req.scenario_id))
    })?;
    if req.dataset.is_some_and(|d| d != dataset) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("scenario `{}` is not a {} scenario", req.scenario_id, req.dataset.map_or("", |d| d.as_str())),
        ));
    }
    let params = merge_params(&app.default_params, req.params.as_ref())?;
    let n = app.next_id.fetch_add(1, Ordering::SeqCst);
    let id = format!("s{n:06}");
    let state = env.live_opening();
    let seed = params.rng_seed.wrapping_add(n);
    let t = now();
    let session = Session {
        id: id.clone(),
        scenario_id: req.scenario_id,
        dataset,
        params,
        status: SessionStatus::Active,
        created_at: t,
        updated_at: t,
        state,
        stats: Vec::new(),
        reward: None,
        rng_seed: seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nonces: HashSet::new(),
        in_flight: false,
    };
    let opening = session.state.history.first().map(|u| u.text.clone()).unwrap_or_default();
    app.sessions.lock().expect("sessions lock").insert(id.clone(), session.clone());
    app.order.lock().expect("order lock").push(id.clone());
    Ok((
        StatusCode::CREATED,
        Json(Created {
            id,
            opening_message: opening,
            session,
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct PostMessage {
    pub text: String,
    pub nonce: String,
    #[serde(default)]
    pub params: Option<Value>,
}

/// What the planner did with one human message.
#[derive(Debug, Clone, Serialize)]
pub struct TurnBundle {
    /// Absent when the human's message ended the dialogue.
    pub act: Option<String>,
    pub act_label: Option<String>,
    pub system_reply: Option<String>,
    pub stats: Option<SearchStats>,
    pub terminal: bool,
    pub terminal_class: Terminal,
    pub reward: Option<f64>,
}

/// Releases the session's in-flight flag (and, unless the turn committed,
/// its nonce) however the handler exits.
struct TurnGuard {
    app: Arc<AppState>,
    id: String,
    nonce: String,
    committed: bool,
}

impl Drop for TurnGuard {
    fn drop(&mut self) {
        if let Some(s) = self.app.sessions.lock().expect("sessions lock").get_mut(&self.id) {
            s.in_flight = false;
            if !self.committed {
                s.nonces.remove(&self.nonce);
            }
        }
    }
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<PostMessage>, JsonRejection>,
) -> Result<Json<TurnBundle>, ApiError> {
    let req = body(payload)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "text must be nonempty"));
    }
    if req.nonce.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "nonce must be nonempty"));
    }
    let (state, params, rng, scenario_id) = {
        let mut sessions = app.sessions.lock().expect("sessions lock");
        let s = sessions
            .get_mut(&id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))?;
        if s.status == SessionStatus::Terminal {
            return Err(ApiError::new(StatusCode::CONFLICT, "session has ended"));
        }
        if s.nonces.contains(&req.nonce) {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("duplicate nonce `{}`", req.nonce)));
        }
        if s.in_flight {
            return Err(ApiError::new(StatusCode::CONFLICT, "a turn is already in progress"));
        }
        s.params = merge_params(&s.params, req.params.as_ref())?;
        s.in_flight = true;
        s.nonces.insert(req.nonce.clone());
        (s.state.clone(), s.params.clone(), s.rng.clone(), s.scenario_id.clone())
    };
    let mut guard = TurnGuard {
        app: app.clone(),
        id: id.clone(),
        nonce: req.nonce.clone(),
        committed: false,
    };
    let (env, _) = app
        .env(&scenario_id)
        .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "scenario disappeared"))?;
    let _permit = app
        .planners
        .acquire()
        .await
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()))?;
    let text = req.text.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let mut rng = rng;
        let (observed, _) = observe_user_reply(env.as_ref(), &state, &text).map_err(|e| e.to_string())?;
        if !observed.is_ongoing() {
            return Ok((observed, None, rng));
        }
        let plan = plan_next_act(&observed, env.as_ref(), &params, &mut rng).map_err(|e| e.to_string())?;
        let next = commit_system_reply(env.as_ref(), &observed, &plan.act, &mut rng).map_err(|e| e.to_string())?;
        Ok::<_, String>((next, Some(plan), rng))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, e))?;

    let (next, plan, rng) = outcome;
    let mut sessions = app.sessions.lock().expect("sessions lock");
    let s = sessions.get_mut(&id).expect("session exists while in flight");
    let spec = app.catalog.get(&s.scenario_id).map(|e| e.env.reward_spec().clone()).unwrap_or_default();
    s.state = next;
    s.rng = rng;
    s.updated_at = now();
    if let Some(p) = &plan {
        s.stats.push(p.stats.clone());
    }
    if !s.state.is_ongoing() {
        s.status = SessionStatus::Terminal;
        s.reward = spec.evaluate(&s.state).ok();
    }
    guard.committed = true;
    let bundle = TurnBundle {
        act: plan.as_ref().map(|p| p.act.id.clone()),
        act_label: plan.as_ref().map(|p| p.act.label.clone()),
        system_reply: plan.as_ref().and_then(|_| s.state.history.last().map(|u| u.text.clone())),
        stats: plan.map(|p| p.stats),
        terminal: s.status == SessionStatus::Terminal,
        terminal_class: s.state.terminal,
        reward: s.reward,
    };
    Ok(Json(bundle))
}

fn with_session<T>(app: &AppState, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, ApiError> {
    let sessions = app.sessions.lock().expect("sessions lock");
    sessions
        .get(id)
        .map(f)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    with_session(&app, &id, |s| Json(s.clone()))
}

async fn get_stats(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    with_session(&app, &id, |s| {
        Json(json!({
            "in_flight": s.in_flight,
            "turns_planned": s.stats.len(),
            "params": s.params,
            "stats": s.stats,
        }))
    })
}

async fn list_scenarios(State(app): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = app
        .catalog
        .entries
        .iter()
        .map(|e| {
            json!({
                "scenario_id": e.env.scenario_id(),
                "dataset": e.dataset,
                "acts": e.env.action_space().acts(),
            })
        })
        .collect();
    Json(Value::Array(list))
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/stats", get(get_stats))
        .with_state(app)
}

/// Resolves on Ctrl-C (or SIGTERM on Unix).
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Serves until `shutdown` resolves, then writes every session to the
/// flush file.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    let n = app.flush()?;
    log::info!("flushed {n} session(s)");
    Ok(())
}
