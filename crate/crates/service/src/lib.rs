//! HTTP front end for run directories.
//!
//! | method | path | effect |
//! |---|---|---|
//! | POST | `/runs` | create a run from a [`RunConfig`] body |
//! | GET | `/runs` | list run ids |
//! | GET | `/runs/{id}` | [`RunRecord`] |
//! | POST | `/runs/{id}/generate` | start or extend generation (202, poll the record) |
//! | GET | `/runs/{id}/candidates?status=` | candidates with their similarity entry |
//! | POST | `/candidates/{cid}/decision` | `{"decision": "accept" \| "reject", "note": ...}` |
//! | GET | `/candidates/{cid}/spans` | shared n-gram spans against each prompt example |
//! | PUT | `/runs/{id}/prompt` | `{"body": ...}` adds a prompt version |
//! | GET | `/runs/{id}/similarity` | latest similarity report |
//! | POST | `/runs/{id}/evaluate` | `{"strategies": [...]}` starts evaluation (202) |
//! | GET | `/runs/{id}/report` | `metrics.json` bytes |
//!
//! Unknown ids give 404, illegal state changes 409 and invalid input 422.
//! When a token is configured every request needs `Authorization: Bearer <token>`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use imputext::eval::Strategy;
use imputext::generator::{CandidateStatus, GenerationRecord};
use imputext::pipeline::{self, Prepared, RunConfig};
use imputext::store::{self, DecisionAction, RunRecord, RunState, RunStore};
use imputext::validator::{shared_spans, CandidateSimilarity};
use imputext::{Error, Score};

pub const TOKEN_ENV: &str = "IMPUTEXT_TOKEN";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub token: Option<String>,
}

struct Run {
    store: RunStore,
    prepared: Prepared,
    busy: AtomicBool,
}

struct AppState {
    config: ServiceConfig,
    runs: Mutex<HashMap<String, Arc<Run>>>,
}

#[derive(Clone)]
pub struct App(Arc<AppState>);

pub struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::IllegalTransition { .. } => StatusCode::CONFLICT,
            Error::Parse { .. }
            | Error::EmptyFile(_)
            | Error::DuplicateId { .. }
            | Error::UnknownCategory(_)
            | Error::InsufficientExamples { .. }
            | Error::InvalidArgument(_)
            | Error::Template(_)
            | Error::Json(_)
            | Error::Csv(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn not_found(what: impl Into<String>) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("not found: {}", what.into()))
}

impl App {
    pub fn new(config: ServiceConfig) -> Self {
        App(Arc::new(AppState {
            config,
            runs: Mutex::new(HashMap::new()),
        }))
    }

    fn run_dir(&self, id: &str) -> PathBuf {
        self.0.config.data_dir.join(id)
    }

    /// Loaded runs are cached; others are reopened from disk on first use.
    fn run(&self, id: &str) -> ApiResult<Arc<Run>> {
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(not_found(format!("run `{id}`")));
        }
        if let Some(r) = self.0.runs.lock().expect("run table poisoned").get(id) {
            return Ok(r.clone());
        }
        let dir = self.run_dir(id);
        if !dir.join(store::RUN_FILE).exists() {
            return Err(not_found(format!("run `{id}`")));
        }
        let store = RunStore::open(&dir)?;
        let config: RunConfig = serde_json::from_value(store.record().config).map_err(Error::from)?;
        let prepared = pipeline::prepare(&config)?;
        let run = Arc::new(Run {
            store,
            prepared,
            busy: AtomicBool::new(false),
        });
        Ok(self
            .0
            .runs
            .lock()
            .expect("run table poisoned")
            .entry(id.to_owned())
            .or_insert(run)
            .clone())
    }

    fn find_candidate(&self, cid: &str) -> ApiResult<(Arc<Run>, GenerationRecord)> {
        for id in store::list_runs(&self.0.config.data_dir)? {
            let run = self.run(&id)?;
            if let Some(c) = run.store.candidate(cid) {
                return Ok((run, c));
            }
        }
        Err(not_found(format!("candidate `{cid}`")))
    }
}

pub fn router(app: App) -> Router {
    Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/generate", post(start_generation))
        .route("/runs/{id}/candidates", get(list_candidates))
        .route("/runs/{id}/prompt", put(update_prompt))
        .route("/runs/{id}/similarity", get(get_similarity))
        .route("/runs/{id}/evaluate", post(start_evaluation))
        .route("/runs/{id}/report", get(get_report))
        .route("/candidates/{cid}/decision", post(decide))
        .route("/candidates/{cid}/spans", get(spans))
        .route("/healthz", get(|| async { "ok" }))
        .layer(middleware::from_fn_with_state(app.clone(), auth))
        .with_state(app)
}

async fn auth(State(app): State<App>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.0.config.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response();
        }
    }
    next.run(req).await
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: &str, config: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(App::new(config))).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub run_id: String,
    pub record: RunRecord,
}

async fn create_run(State(app): State<App>, Json(mut config): Json<RunConfig>) -> ApiResult<impl IntoResponse> {
    config.output_dir = app.0.config.data_dir.clone();
    let id = config.run_id();
    let dir = app.run_dir(&id);
    let run = tokio::task::spawn_blocking(move || -> ApiResult<Run> {
        let prepared = pipeline::prepare(&config)?;
        if dir.join(store::RUN_FILE).exists() {
            return Err(ApiError(
                StatusCode::CONFLICT,
                format!("run `{}` already exists", config.run_id()),
            ));
        }
        let store = RunStore::create(&dir, prepared.initial_record()?)?;
        Ok(Run {
            store,
            prepared,
            busy: AtomicBool::new(false),
        })
    })
    .await
    .map_err(join_error)??;
    let record = run.store.record();
    app.0
        .runs
        .lock()
        .expect("run table poisoned")
        .insert(id.clone(), Arc::new(run));
    Ok((StatusCode::CREATED, Json(Created { run_id: id, record })))
}

async fn list_runs(State(app): State<App>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(store::list_runs(&app.0.config.data_dir)?))
}

async fn get_run(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<RunRecord>> {
    Ok(Json(app.run(&id)?.store.record()))
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}"))
}

/// Claims the run for a background job and moves it into `to`.
fn claim(run: &Run, to: RunState) -> ApiResult<()> {
    if run.busy.swap(true, Ordering::SeqCst) {
        return Err(ApiError(
            StatusCode::CONFLICT,
            "a job is already running for this run".into(),
        ));
    }
    run.store.transition(to, None).map(|_| ()).map_err(|e| {
        run.busy.store(false, Ordering::SeqCst);
        e.into()
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub run_id: String,
    pub state: RunState,
}

async fn start_generation(State(app): State<App>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let run = app.run(&id)?;
    let provider = run.prepared.config.provider.build()?;
    claim(&run, RunState::Generating)?;
    let job = run.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = pipeline::generate(&job.store, &job.prepared, provider.as_ref()) {
            log::error!("generation for {} failed: {e}", job.store.record().run_id);
        }
        job.busy.store(false, Ordering::SeqCst);
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(Accepted {
            run_id: id,
            state: RunState::Generating,
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct CandidateQuery {
    pub status: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub record: GenerationRecord,
    pub similarity: Option<CandidateSimilarity<Score>>,
}

async fn list_candidates(
    State(app): State<App>,
    Path(id): Path<String>,
    Query(q): Query<CandidateQuery>,
) -> ApiResult<Json<Vec<CandidateView>>> {
    let run = app.run(&id)?;
    let status: Option<CandidateStatus> = q.status.as_deref().map(str::parse).transpose()?;
    let report = run.store.similarity()?;
    let views = run
        .store
        .candidates(status)
        .into_iter()
        .map(|record| CandidateView {
            similarity: report.as_ref().and_then(|r| r.entry(&record.candidate_id)).cloned(),
            record,
        })
        .collect();
    Ok(Json(views))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

async fn decide(
    State(app): State<App>,
    Path(cid): Path<String>,
    Json(body): Json<DecisionBody>,
) -> ApiResult<Json<GenerationRecord>> {
    let (run, _) = app.find_candidate(&cid)?;
    let action = match body.decision {
        Decision::Accept => DecisionAction::Accept,
        Decision::Reject => DecisionAction::Reject,
    };
    Ok(Json(run.store.decide(&cid, action, body.note, "reviewer")?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExampleSpans {
    pub example_id: String,
    /// Half-open word ranges of the candidate shared with this example.
    pub spans: Vec<(usize, usize)>,
}

async fn spans(State(app): State<App>, Path(cid): Path<String>) -> ApiResult<Json<Vec<ExampleSpans>>> {
    let (run, c) = app.find_candidate(&cid)?;
    let n = run.prepared.config.thresholds.containment_n;
    let out = c
        .example_ids
        .iter()
        .map(|eid| ExampleSpans {
            example_id: eid.clone(),
            spans: run
                .prepared
                .corpus
                .get(eid)
                .map(|e| shared_spans(&c.text, &e.text, n))
                .unwrap_or_default(),
        })
        .collect();
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PromptBody {
    pub body: String,
}

async fn update_prompt(
    State(app): State<App>,
    Path(id): Path<String>,
    Json(body): Json<PromptBody>,
) -> ApiResult<Json<store::PromptVersion>> {
    let run = app.run(&id)?;
    run.prepared.template.with_body(body.body.clone())?;
    Ok(Json(run.store.set_prompt(body.body)?))
}

async fn get_similarity(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Response> {
    let run = app.run(&id)?;
    match run.store.similarity()? {
        Some(r) => Ok(Json(r).into_response()),
        None => Err(not_found(format!("similarity report for `{id}`"))),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct EvaluateBody {
    #[serde(default)]
    pub strategies: Option<Vec<Strategy>>,
}

async fn start_evaluation(
    State(app): State<App>,
    Path(id): Path<String>,
    body: Option<Json<EvaluateBody>>,
) -> ApiResult<impl IntoResponse> {
    let run = app.run(&id)?;
    let strategies = body
        .and_then(|Json(b)| b.strategies)
        .unwrap_or_else(|| run.prepared.config.cv.strategies.clone());
    if strategies.is_empty() {
        return Err(Error::invalid("no strategies given").into());
    }
    claim(&run, RunState::Evaluating)?;
    let job = run.clone();
    tokio::task::spawn_blocking(move || {
        let trainer = job.prepared.config.trainer.build();
        if let Err(e) = pipeline::evaluate(&job.store, &job.prepared, &strategies, trainer.as_ref()) {
            log::error!("evaluation for {} failed: {e}", job.store.record().run_id);
        }
        job.busy.store(false, Ordering::SeqCst);
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(Accepted {
            run_id: id,
            state: RunState::Evaluating,
        }),
    ))
}

async fn get_report(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Response> {
    let run = app.run(&id)?;
    match run.store.metrics_bytes()? {
        Some(bytes) => Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response()),
        None => Err(not_found(format!("report for `{id}`"))),
    }
}
