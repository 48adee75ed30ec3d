//! Asynchronous job service over HTTP.
//!
//! ```text
//! POST /jobs                         multipart: a `tool` field plus the tool's parts
//! GET  /jobs/{id}                    job record
//! GET  /jobs/{id}/artifacts/{name}   one result
//! GET  /jobs/{id}/peaks?bins=N       min/max pairs of the job's audio, for waveform display
//! POST /jobs/{id}/realign            {"t0", "t1", "words"} against a done alignment job
//! ```
//!
//! Errors come back as `{"error": {"kind", "message", ...}}`. When an API
//! key is configured every request must carry it in `x-api-key`.

pub mod store;
pub mod tools;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;

use crate::am::AcousticModel;
use crate::dsp::{load_wav_bytes, Frontend};
use crate::formats::parse_annotation_json;
use crate::g2p::G2p;
use crate::vad::VadModel;
pub use store::{ArtifactRef, JobRecord, JobState, JobStore, StoreError};
pub use tools::{check_parts, Engine, ManifestMismatch, RegionRequest, Tool};

pub const DEFAULT_PAYLOAD_LIMIT: usize = 500 * 1024 * 1024;
pub const DEFAULT_BINS: usize = 1000;
pub const MAX_BINS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Zero accepts and stores jobs without running them.
    pub workers: usize,
    pub storage: PathBuf,
    pub payload_limit: usize,
    pub api_key: Option<String>,
    /// Used by align and kws jobs that upload no model.
    pub model: Option<PathBuf>,
    pub vad_model: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            workers: 2,
            storage: PathBuf::from("speechtools-jobs"),
            payload_limit: DEFAULT_PAYLOAD_LIMIT,
            api_key: None,
            model: None,
            vad_model: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadInputManifest(ManifestMismatch),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("request body exceeds the {limit} byte limit")]
    PayloadTooLarge { limit: usize },
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {job} has no artifact {name:?}")]
    UnknownArtifact { job: String, name: String },
    #[error("region [{t0}, {t1}] is outside [0, {duration}]")]
    RegionOutOfRange { t0: f64, t1: f64, duration: f64 },
    #[error("job {0} is not a finished alignment")]
    NotAnAlignment(String),
    #[error("job {0} has no audio input")]
    NoAudio(String),
    #[error("missing or wrong x-api-key")]
    Unauthorized,
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Startup(String),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadInputManifest(_) => "BadInputManifest",
            ServiceError::UnknownTool(_) => "UnknownTool",
            ServiceError::PayloadTooLarge { .. } => "PayloadTooLarge",
            ServiceError::UnknownJob(_) => "UnknownJob",
            ServiceError::UnknownArtifact { .. } => "UnknownArtifact",
            ServiceError::RegionOutOfRange { .. } => "RegionOutOfRange",
            ServiceError::NotAnAlignment(_) => "NotAnAlignment",
            ServiceError::NoAudio(_) => "NoAudio",
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Store(_) => "StoreError",
            ServiceError::Startup(_) => "Startup",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadInputManifest(_) | ServiceError::UnknownTool(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::PayloadTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::UnknownJob(_) | ServiceError::UnknownArtifact { .. } => StatusCode::NOT_FOUND,
            ServiceError::RegionOutOfRange { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::NotAnAlignment(_) | ServiceError::NoAudio(_) => StatusCode::CONFLICT,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::Store(_) | ServiceError::Startup(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let ServiceError::BadInputManifest(m) = &self {
            body["missing"] = json!(m.missing);
            body["extra"] = json!(m.extra);
        }
        (self.status(), Json(json!({ "error": body }))).into_response()
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<Mutex<JobStore>>,
    queue: mpsc::UnboundedSender<String>,
    engine: Arc<Engine>,
    cfg: Arc<ServiceConfig>,
}

impl AppState {
    fn store(&self) -> std::sync::MutexGuard<'_, JobStore> {
        // a panicking handler cannot leave the store half-written: every
        // mutation is one appended line
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn job(&self, id: &str) -> Result<JobRecord, ServiceError> {
        self.store().get(id).cloned().ok_or_else(|| ServiceError::UnknownJob(id.to_string()))
    }

    fn enqueue(&self, id: String) {
        // the receiver lives as long as the service
        let _ = self.queue.send(id);
    }
}

fn multipart_error(e: axum::extract::multipart::MultipartError, limit: usize) -> ServiceError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ServiceError::PayloadTooLarge { limit }
    } else {
        ServiceError::BadRequest(e.body_text())
    }
}

async fn submit(State(st): State<AppState>, mp: Result<Multipart, axum::extract::multipart::MultipartRejection>) -> Result<Response, ServiceError> {
    let limit = st.cfg.payload_limit;
    let mut mp = mp.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let mut tool = None;
    let mut parts: Vec<(String, Option<String>, Vec<u8>)> = Vec::new();
    while let Some(field) = mp.next_field().await.map_err(|e| multipart_error(e, limit))? {
        let name = field.name().unwrap_or("").to_string();
        let filename = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| multipart_error(e, limit))?;
        if name == "tool" {
            tool = Some(String::from_utf8_lossy(&bytes).trim().to_string());
        } else {
            parts.push((name, filename, bytes.to_vec()));
        }
    }
    let Some(tool_name) = tool else {
        return Err(ServiceError::BadInputManifest(ManifestMismatch {
            missing: vec!["tool".into()],
            extra: Vec::new(),
        }));
    };
    let tool = Tool::parse(&tool_name).ok_or(ServiceError::UnknownTool(tool_name))?;
    let names: Vec<&str> = parts.iter().map(|(n, _, _)| n.as_str()).collect();
    check_parts(tool, &names, st.engine.model.is_some()).map_err(ServiceError::BadInputManifest)?;

    let st2 = st.clone();
    let job = tokio::task::spawn_blocking(move || -> Result<JobRecord, ServiceError> {
        let mut store = st2.store();
        let mut inputs = Vec::with_capacity(parts.len());
        for (name, filename, bytes) in parts {
            let media = if name == "audio" { "audio/wav" } else { tools::TEXT };
            let mut a = store.put_blob(&name, media, &bytes)?;
            a.filename = filename;
            inputs.push(a);
        }
        Ok(store.submit(tool, inputs, None)?)
    })
    .await
    .map_err(|e| ServiceError::BadRequest(e.to_string()))??;
    tracing::info!(id = %job.id, tool = tool.as_str(), "job queued");
    st.enqueue(job.id.clone());
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<JobRecord>, ServiceError> {
    Ok(Json(st.job(&id)?))
}

async fn get_artifact(State(st): State<AppState>, Path((id, name)): Path<(String, String)>) -> Result<Response, ServiceError> {
    let job = st.job(&id)?;
    let a = job.result(&name).cloned().ok_or(ServiceError::UnknownArtifact { job: id, name })?;
    let bytes = st.store().read_blob(&a)?;
    Ok(([(header::CONTENT_TYPE, a.media_type)], bytes).into_response())
}

#[derive(Debug, Deserialize)]
struct PeaksQuery {
    bins: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Peaks {
    pub sample_rate: u32,
    pub samples: u64,
    /// `[min, max]` per bin.
    pub peaks: Vec<[f32; 2]>,
}

async fn get_peaks(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<PeaksQuery>) -> Result<Json<Peaks>, ServiceError> {
    let job = st.job(&id)?;
    let a = job.input("audio").cloned().ok_or_else(|| ServiceError::NoAudio(id.clone()))?;
    let bins = q.bins.unwrap_or(DEFAULT_BINS);
    if bins == 0 || bins > MAX_BINS {
        return Err(ServiceError::BadRequest(format!("bins must be in 1..={MAX_BINS}")));
    }
    let bytes = st.store().read_blob(&a)?;
    let peaks = tokio::task::spawn_blocking(move || -> Result<Peaks, ServiceError> {
        let audio = load_wav_bytes(&bytes).map_err(|e| ServiceError::BadRequest(format!("audio input: {e}")))?;
        Ok(Peaks {
            sample_rate: audio.sample_rate,
            samples: audio.len() as u64,
            peaks: audio.peaks(bins).into_iter().map(|(lo, hi)| [lo, hi]).collect(),
        })
    })
    .await
    .map_err(|e| ServiceError::BadRequest(e.to_string()))??;
    Ok(Json(peaks))
}

async fn realign(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<RegionRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ServiceError> {
    let Json(region) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let job = st.job(&id)?;
    let result = match (job.tool, job.state, job.result("alignment.json")) {
        (Tool::Align, JobState::Done, Some(a)) => a.clone(),
        _ => return Err(ServiceError::NotAnAlignment(id)),
    };
    let st2 = st.clone();
    let new = tokio::task::spawn_blocking(move || -> Result<JobRecord, ServiceError> {
        let mut store = st2.store();
        let doc_bytes = store.read_blob(&result)?;
        let doc = std::str::from_utf8(&doc_bytes)
            .ok()
            .and_then(|t| parse_annotation_json(t).ok())
            .ok_or_else(|| ServiceError::NotAnAlignment(id.clone()))?;
        let duration = doc.audio.samples as f64 / doc.audio.sample_rate as f64;
        let (t0, t1) = (region.t0, region.t1);
        if !(t0.is_finite() && t1.is_finite() && 0.0 <= t0 && t0 < t1 && t1 <= duration) {
            return Err(ServiceError::RegionOutOfRange { t0, t1, duration });
        }
        let mut inputs: Vec<ArtifactRef> = job.inputs.iter().filter(|a| a.name != "alignment" && a.name != "region").cloned().collect();
        let mut original = result.clone();
        original.name = "alignment".into();
        inputs.push(original);
        let body = serde_json::to_vec(&region).expect("regions serialize");
        inputs.push(store.put_blob("region", tools::JSON, &body)?);
        Ok(store.submit(Tool::Align, inputs, Some(id))?)
    })
    .await
    .map_err(|e| ServiceError::BadRequest(e.to_string()))??;
    st.enqueue(new.id.clone());
    Ok((StatusCode::ACCEPTED, Json(new)).into_response())
}

async fn require_key(State(st): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(key) = &st.cfg.api_key {
        if headers.get("x-api-key").and_then(|v| v.to_str().ok()) != Some(key.as_str()) {
            return ServiceError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

/// Runs one queued job to completion. Called on a blocking thread.
fn execute(st: &AppState, id: &str) {
    let (job, parts) = {
        let mut store = st.store();
        let job = match store.start(id) {
            Ok(j) => j,
            Err(e) => {
                tracing::warn!(%id, "not started: {e}");
                return;
            }
        };
        let mut parts = Vec::with_capacity(job.inputs.len());
        for a in &job.inputs {
            match store.read_blob(a) {
                Ok(b) => parts.push((a.clone(), b)),
                Err(e) => {
                    let _ = store.fail(id, &format!("StoreError: {e}"));
                    return;
                }
            }
        }
        (job, parts)
    };
    let inputs = tools::JobInputs { parts };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| tools::run(job.tool, &inputs, &st.engine)));
    let mut store = st.store();
    let res = match outcome {
        Ok(Ok(outputs)) => outputs
            .iter()
            .map(|o| store.put_blob(o.name, o.media_type, &o.bytes))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|results| store.finish(id, results)),
        Ok(Err(e)) => store.fail(id, &tools::describe(&e)),
        Err(_) => store.fail(id, "internal error: the tool panicked"),
    };
    match res {
        Ok(()) => tracing::info!(%id, state = ?store.get(id).map(|j| j.state), "job finished"),
        Err(e) => tracing::error!(%id, "could not record the outcome: {e}"),
    }
}

async fn worker(st: AppState, rx: Arc<tokio::sync::Mutex<mpsc::UnboundedReceiver<String>>>, mut stop: watch::Receiver<bool>) {
    loop {
        let next = {
            let mut rx = rx.lock().await;
            tokio::select! {
                id = rx.recv() => id,
                _ = stop.changed() => None,
            }
        };
        let Some(id) = next else { break };
        let st = st.clone();
        if let Err(e) = tokio::task::spawn_blocking(move || execute(&st, &id)).await {
            tracing::error!("worker task failed: {e}");
        }
        if *stop.borrow() {
            break;
        }
    }
}

fn load_engine(cfg: &ServiceConfig) -> Result<Engine, ServiceError> {
    let model = match &cfg.model {
        Some(p) => Some(Arc::new(
            AcousticModel::load(p).map_err(|e| ServiceError::Startup(format!("{}: {e}", p.display())))?,
        )),
        None => None,
    };
    let vad = match &cfg.vad_model {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ServiceError::Startup(format!("{}: {e}", p.display())))?;
            Some(Arc::new(
                VadModel::from_json(&text).map_err(|e| ServiceError::Startup(format!("{}: {e}", p.display())))?,
            ))
        }
        None => None,
    };
    Ok(Engine {
        g2p: Arc::new(G2p::polish()),
        frontend: Frontend::default(),
        model,
        vad,
    })
}

fn router(st: AppState) -> Router {
    Router::new()
        .route("/jobs", post(submit))
        .route("/jobs/:id", get(get_job))
        .route("/jobs/:id/artifacts/:name", get(get_artifact))
        .route("/jobs/:id/peaks", get(get_peaks))
        .route("/jobs/:id/realign", post(realign))
        .layer(DefaultBodyLimit::max(st.cfg.payload_limit))
        .layer(middleware::from_fn_with_state(st.clone(), require_key))
        .with_state(st)
}

/// A started service. Dropping it leaves the tasks running; call
/// [`RunningService::shutdown`] to stop them.
pub struct RunningService {
    pub addr: SocketAddr,
    stop: watch::Sender<bool>,
    server: JoinHandle<std::io::Result<()>>,
    workers: Vec<JoinHandle<()>>,
}

impl RunningService {
    /// Stops accepting requests and waits for jobs already running.
    /// Queued jobs stay queued in the store.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.server.await;
        for w in self.workers {
            let _ = w.await;
        }
    }
}

/// Opens the store, re-queues jobs a previous run left queued, binds and
/// starts serving in the background.
pub async fn spawn(cfg: ServiceConfig) -> Result<RunningService, ServiceError> {
    let engine = load_engine(&cfg)?;
    let storage = cfg.storage.clone();
    let (store, queued) = tokio::task::spawn_blocking(move || JobStore::open(storage))
        .await
        .map_err(|e| ServiceError::Startup(e.to_string()))??;
    let (tx, rx) = mpsc::unbounded_channel();
    let listener = tokio::net::TcpListener::bind(cfg.listen)
        .await
        .map_err(|e| ServiceError::Startup(format!("bind {}: {e}", cfg.listen)))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Startup(e.to_string()))?;
    let st = AppState {
        store: Arc::new(Mutex::new(store)),
        queue: tx,
        engine: Arc::new(engine),
        cfg: Arc::new(cfg),
    };
    if !queued.is_empty() {
        tracing::info!("re-queued {} job(s) from the store", queued.len());
    }
    for id in queued {
        st.enqueue(id);
    }
    let (stop, stop_rx) = watch::channel(false);
    let rx = Arc::new(tokio::sync::Mutex::new(rx));
    let workers = (0..st.cfg.workers)
        .map(|_| tokio::spawn(worker(st.clone(), rx.clone(), stop_rx.clone())))
        .collect();
    let app = router(st);
    let mut server_stop = stop_rx;
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = server_stop.changed().await;
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(RunningService { addr, stop, server, workers })
}

/// Serves until ctrl-c.
pub async fn serve(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let svc = spawn(cfg).await?;
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
    svc.shutdown().await;
    Ok(())
}
