//! HTTP/JSON session service over the coordination engine.
//!
//! One session holds the current world, the active strategy and schedule,
//! and an append-only event log. Every mutation carries the version it was
//! based on and is applied one at a time behind a single write lock, so the
//! accepted mutations form a linear history. Searches run in the background
//! and are polled.

mod error;
mod session;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::{Notify, RwLock};

use gicoord_api::*;
use gicoord_core::search::optimal_plan_cancelable;
use gicoord_core::store::{save_snapshot, ScenarioDocument};
use gicoord_core::strategy::DEFAULT_CHOICE_CAP;
use gicoord_core::world_digest;

pub use error::{ApiError, ApiResult};
pub use session::Session;

struct Job {
    view: SearchJob,
    cancel: Arc<AtomicBool>,
}

struct Inner {
    session: Arc<RwLock<Session>>,
    notify: Notify,
    jobs: Mutex<BTreeMap<String, Job>>,
    next_job: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(session: Session) -> Self {
        Self(Arc::new(Inner {
            session: Arc::new(RwLock::new(session)),
            notify: Notify::new(),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
        }))
    }

    /// Runs `f` against a snapshot of the session off the async workers.
    async fn read<T: Send + 'static>(&self, f: impl FnOnce(&Session) -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
        let guard = self.0.session.clone().read_owned().await;
        tokio::task::spawn_blocking(move || f(&guard))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::INTERNAL, e.to_string()))?
    }

    /// Applies one mutation based on `expected`. `f` receives the version the
    /// session moves to if it succeeds.
    async fn mutate<T: Send + 'static>(
        &self,
        expected: u64,
        f: impl FnOnce(&mut Session, u64) -> ApiResult<T> + Send + 'static,
    ) -> ApiResult<T> {
        let mut guard = self.0.session.clone().write_owned().await;
        if guard.version != expected {
            return Err(ApiError::conflict(guard.version, expected));
        }
        let logged = guard.log.len();
        let (out, grew) = tokio::task::spawn_blocking(move || {
            let next = guard.version + 1;
            let out = f(&mut guard, next);
            if out.is_ok() {
                guard.version = next;
            }
            let grew = guard.log.len() > logged;
            (out, grew)
        })
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::INTERNAL, e.to_string()))?;
        if grew || out.is_ok() {
            self.0.notify.notify_waiters();
        }
        out
    }
}

/// JSON body whose rejections use the service's error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(r) => Err(ApiError::bad_request(r.body_text())),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/world", get(get_world))
        .route("/strategy", post(post_strategy))
        .route("/choices", get(get_choices))
        .route("/decision", post(post_decision))
        .route("/schedule", get(get_schedule))
        .route("/search", post(post_search))
        .route("/search/{id}", get(get_search).delete(cancel_search))
        .route("/search/{id}/cancel", post(cancel_search))
        .route("/recommendations", get(get_recommendations))
        .route("/refine", post(post_refine))
        .route("/allocate", post(post_allocate))
        .route("/sim/step", post(post_step))
        .route("/sim/run", post(post_run))
        .route("/events", get(get_events))
        .route("/events/inject", post(post_inject))
        .route("/scenario", get(get_scenario).post(post_scenario));
    Router::new().nest(PREFIX, api).with_state(state)
}

/// Serves `session` on `addr` until the process stops.
pub async fn serve(addr: SocketAddr, session: Session) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, session).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, session: Session) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(AppState::new(session))).await
}

async fn get_world(State(st): State<AppState>) -> ApiResult<Json<WorldView>> {
    st.read(|s| Ok(s.world_view())).await.map(Json)
}

async fn post_strategy(State(st): State<AppState>, Body(req): Body<StrategyRequest>) -> ApiResult<Json<Accepted>> {
    st.mutate(req.expected_version, move |s, v| s.set_strategy(req.strategy, v)).await.map(Json)
}

#[derive(Deserialize)]
struct ChoicesQuery {
    cap: Option<usize>,
}

async fn get_choices(State(st): State<AppState>, Query(q): Query<ChoicesQuery>) -> ApiResult<Json<ChoicesReply>> {
    let cap = q.cap.unwrap_or(DEFAULT_CHOICE_CAP);
    st.read(move |s| s.choices(cap)).await.map(Json)
}

async fn post_decision(State(st): State<AppState>, Body(req): Body<DecisionRequest>) -> ApiResult<Json<ScheduleReply>> {
    st.mutate(req.expected_version, move |s, v| s.decide(&req.decision, v)).await.map(Json)
}

async fn get_schedule(State(st): State<AppState>) -> ApiResult<Json<ScheduleReply>> {
    st.read(|s| s.schedule_reply()).await.map(Json)
}

async fn post_search(State(st): State<AppState>, body: Option<Json<SearchRequest>>) -> ApiResult<Response> {
    let budget = body.and_then(|Json(b)| b.budget).unwrap_or(DEFAULT_SEARCH_BUDGET);
    let (version, strategy, pw) = st.read(|s| Ok((s.version, s.active_strategy()?.clone(), s.planning()?))).await?;
    let id = format!("s{}", st.0.next_job.fetch_add(1, Ordering::Relaxed));
    let cancel = Arc::new(AtomicBool::new(false));
    let view = SearchJob {
        id: id.clone(),
        status: JobStatus::Running,
        version,
        world_digest: world_digest(&pw),
        budget,
        plan: None,
        error: None,
    };
    st.0.jobs.lock().expect("job table").insert(id.clone(), Job { view: view.clone(), cancel: cancel.clone() });

    let task_state = st.clone();
    tokio::spawn(async move {
        let flag = cancel.clone();
        let result =
            tokio::task::spawn_blocking(move || optimal_plan_cancelable(&pw, &strategy, budget, Some(&flag))).await;
        let cancelled = cancel.load(Ordering::Relaxed);
        let plan = match result {
            Ok(Ok(plan)) => Ok(plan),
            Ok(Err(e)) => Err(ApiError::from(e).body),
            Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, code::INTERNAL, e.to_string()).body),
        };
        if let Ok(p) = &plan {
            let mut s = task_state.0.session.write().await;
            s.offer_plan(p.clone());
        }
        let mut jobs = task_state.0.jobs.lock().expect("job table");
        if let Some(job) = jobs.get_mut(&id) {
            match plan {
                Ok(p) => {
                    job.view.status = if cancelled { JobStatus::Cancelled } else { JobStatus::Done };
                    job.view.plan = Some(p);
                }
                Err(e) => {
                    job.view.status = JobStatus::Failed;
                    job.view.error = Some(e);
                }
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(view)).into_response())
}

fn job_view(st: &AppState, id: &str) -> ApiResult<SearchJob> {
    let jobs = st.0.jobs.lock().expect("job table");
    jobs.get(id).map(|j| j.view.clone()).ok_or_else(|| ApiError::not_found(format!("no search {id}")))
}

async fn get_search(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SearchJob>> {
    job_view(&st, &id).map(Json)
}

async fn cancel_search(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SearchJob>> {
    {
        let jobs = st.0.jobs.lock().expect("job table");
        let job = jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("no search {id}")))?;
        job.cancel.store(true, Ordering::Relaxed);
    }
    job_view(&st, &id).map(Json)
}

async fn get_recommendations(State(st): State<AppState>) -> ApiResult<Json<RecommendationsReply>> {
    st.read(|s| s.recommendations()).await.map(Json)
}

async fn post_refine(State(st): State<AppState>, Body(req): Body<RefineRequest>) -> ApiResult<Json<StrategyReply>> {
    st.mutate(req.expected_version, move |s, v| s.refine(&req.accepted, v)).await.map(Json)
}

async fn post_allocate(
    State(st): State<AppState>,
    Body(req): Body<AllocateRequest>,
) -> ApiResult<Json<AllocationReply>> {
    let reply = st.read(move |s| s.allocate(req.transport_speed)).await?;
    let mut s = st.0.session.write().await;
    if s.version == reply.version {
        s.log_allocation(&reply.allocation);
        drop(s);
        st.0.notify.notify_waiters();
    }
    Ok(Json(reply))
}

async fn post_step(State(st): State<AppState>, Body(req): Body<StepRequest>) -> ApiResult<Json<StepReply>> {
    st.mutate(req.expected_version, move |s, v| s.step(req.dt, v)).await.map(Json)
}

async fn post_run(State(st): State<AppState>, Body(req): Body<RunRequest>) -> ApiResult<Json<RunReply>> {
    st.mutate(req.expected_version, move |s, v| s.run(&req.config, v)).await.map(Json)
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    #[serde(default)]
    wait_ms: u64,
}

async fn get_events(State(st): State<AppState>, Query(q): Query<EventsQuery>) -> ApiResult<Json<EventsReply>> {
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.wait_ms.min(MAX_WAIT_MS));
    loop {
        // Register before looking, so a notification in between is not lost.
        let notified = st.0.notify.notified();
        tokio::pin!(notified);
        notified.as_mut().enable();
        {
            let s = st.0.session.read().await;
            let reply = s.events_since(q.since);
            if !reply.events.is_empty() || tokio::time::Instant::now() >= deadline {
                return Ok(Json(reply));
            }
        }
        if tokio::time::timeout_at(deadline, notified).await.is_err() {
            let s = st.0.session.read().await;
            return Ok(Json(s.events_since(q.since)));
        }
    }
}

async fn post_inject(State(st): State<AppState>, Body(req): Body<InjectRequest>) -> ApiResult<Json<InjectReply>> {
    st.mutate(req.expected_version, move |s, v| s.inject(req.event, v)).await.map(Json)
}

async fn get_scenario(State(st): State<AppState>) -> ApiResult<Response> {
    let doc = st.read(|s| Ok(s.document())).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], save_snapshot(&doc)).into_response())
}

async fn post_scenario(State(st): State<AppState>, Body(req): Body<ScenarioRequest>) -> ApiResult<Json<Accepted>> {
    st.mutate(req.expected_version, move |s, v| s.load(req.document, v)).await.map(Json)
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(Session::new(ScenarioDocument::new(Default::default(), Vec::new())))
    }
}
