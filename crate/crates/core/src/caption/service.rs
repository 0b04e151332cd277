//! HTTP API used by the review UI.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/qa/batch?limit=N` | sampled records with preview URLs |
//! | GET | `/api/media/{id}?index=K` | preview image of a record's K-th media file |
//! | POST | `/api/qa/verdict` | `{"class_id", "verdict": "good"\|"bad", "note"}` |
//! | GET | `/api/stats` | per-status and per-domain counts |
//! | POST | `/api/regenerate/run` | annotation pass over regenerating records |

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

use super::client::CaptionClient;
use super::engine::{apply_verdict, preview_png, run_annotation_shared, AnnotateOptions, AnnotateScope};
use super::manifest::ManifestStore;
use super::problems::ProblemLists;
use super::{DomainKind, ManifestRecord, RecordStatus, Verdict};
use crate::error::{Error, Result};

/// Everything the service needs. The store is shared with the caller.
#[derive(Clone)]
pub struct ReviewContext {
    pub store: Arc<Mutex<ManifestStore>>,
    pub client: Arc<dyn CaptionClient>,
    pub lists: Arc<ProblemLists>,
    pub options: AnnotateOptions,
    /// Directory of static UI assets served for any non-API path.
    pub static_dir: Option<PathBuf>,
}

struct AppState {
    ctx: ReviewContext,
    // request_id -> affected count of the verdict already applied
    applied: Mutex<HashMap<String, usize>>,
}

type Shared = Arc<AppState>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub status: BTreeMap<RecordStatus, usize>,
    pub domain: BTreeMap<DomainKind, usize>,
    pub total: usize,
}

impl StatsReport {
    pub fn of(store: &ManifestStore) -> Self {
        Self {
            status: store.status_counts(),
            domain: store.domain_counts(),
            total: store.len(),
        }
    }
}

#[derive(Serialize)]
struct BatchItem<'a> {
    #[serde(flatten)]
    record: &'a ManifestRecord,
    preview_urls: Vec<String>,
}

#[derive(Deserialize)]
struct BatchQuery {
    limit: Option<usize>,
}

#[derive(Deserialize)]
struct MediaQuery {
    index: Option<usize>,
}

#[derive(Deserialize)]
struct VerdictBody {
    class_id: String,
    verdict: Verdict,
    #[serde(default)]
    note: String,
    /// Resubmitting the same id returns the first result without applying
    /// the verdict again.
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Serialize)]
struct VerdictLogLine<'a> {
    class_id: &'a str,
    verdict: Verdict,
    note: &'a str,
    affected: usize,
    at: chrono::DateTime<chrono::Utc>,
}

struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::UnknownClass(_) | Error::UnknownRecord(_) => StatusCode::NOT_FOUND,
            Error::Config(_) | Error::Format(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn batch(State(app): State<Shared>, Query(q): Query<BatchQuery>) -> Json<serde_json::Value> {
    let limit = q.limit.unwrap_or(100);
    let store = app.ctx.store.lock().expect("store lock");
    let mut sampled: Vec<&ManifestRecord> = store
        .records()
        .iter()
        .filter(|r| r.status == RecordStatus::QaSampled)
        .collect();
    sampled.sort_by(|a, b| (&a.class_id, &a.id).cmp(&(&b.class_id, &b.id)));
    let items: Vec<BatchItem> = sampled
        .into_iter()
        .take(limit)
        .map(|record| BatchItem {
            preview_urls: (0..record.media_paths.len().max(1))
                .map(|k| format!("/api/media/{}?index={k}", record.id))
                .collect(),
            record,
        })
        .collect();
    Json(serde_json::to_value(items).expect("batch serializes"))
}

async fn media(
    State(app): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<MediaQuery>,
) -> ApiResult<Response> {
    let record = app
        .ctx
        .store
        .lock()
        .expect("store lock")
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::from(Error::UnknownRecord(id)))?;
    let part = blocking(move || preview_png(&record, q.index.unwrap_or(0))).await?;
    Ok(([(header::CONTENT_TYPE, part.mime)], part.bytes).into_response())
}

async fn verdict(State(app): State<Shared>, Json(body): Json<VerdictBody>) -> ApiResult<Json<serde_json::Value>> {
    if let Some(id) = &body.request_id {
        if let Some(prev) = app.applied.lock().expect("applied lock").get(id) {
            return Ok(Json(serde_json::json!({ "affected": prev, "duplicate": true })));
        }
    }
    let app2 = app.clone();
    let affected = blocking(move || {
        let mut store = app2.ctx.store.lock().expect("store lock");
        let clock = app2.ctx.options.clock;
        let affected = apply_verdict(&mut store, &body.class_id, body.verdict, clock)?;
        if let Some(path) = store.path() {
            let mut log = path.as_os_str().to_owned();
            log.push(".verdicts.jsonl");
            let line = VerdictLogLine {
                class_id: &body.class_id,
                verdict: body.verdict,
                note: &body.note,
                affected,
                at: clock.now(),
            };
            let log = PathBuf::from(log);
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log)
                .map_err(|e| Error::io(&log, e))?;
            writeln!(f, "{}", serde_json::to_string(&line).expect("log line serializes"))
                .map_err(|e| Error::io(&log, e))?;
        }
        if let Some(id) = body.request_id {
            app2.applied.lock().expect("applied lock").insert(id, affected);
        }
        Ok(affected)
    })
    .await?;
    Ok(Json(serde_json::json!({ "affected": affected })))
}

async fn stats(State(app): State<Shared>) -> Json<StatsReport> {
    Json(StatsReport::of(&app.ctx.store.lock().expect("store lock")))
}

async fn regenerate(State(app): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    let summary = blocking(move || {
        let ctx = &app.ctx;
        let options = AnnotateOptions {
            scope: AnnotateScope::RegeneratingOnly,
            ..ctx.options.clone()
        };
        run_annotation_shared(&ctx.store, ctx.client.as_ref(), &ctx.lists, &options)
    })
    .await?;
    let errors: Vec<_> = summary
        .errors
        .iter()
        .map(|(id, msg)| serde_json::json!({ "id": id, "error": msg }))
        .collect();
    Ok(Json(serde_json::json!({
        "succeeded": summary.succeeded,
        "failed": summary.failed,
        "errors": errors,
    })))
}

fn router(ctx: ReviewContext) -> Router {
    let static_dir = ctx.static_dir.clone();
    let state = Arc::new(AppState {
        ctx,
        applied: Mutex::new(HashMap::new()),
    });
    let api = Router::new()
        .route("/api/qa/batch", get(batch))
        .route("/api/media/{id}", get(media))
        .route("/api/qa/verdict", post(verdict))
        .route("/api/stats", get(stats))
        .route("/api/regenerate/run", post(regenerate))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A running service. Dropping the handle leaves the service running until
/// the process exits; call [`ReviewHandle::shutdown`] to stop it.
pub struct ReviewHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ReviewHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests and waits for in-flight ones to finish.
    pub fn shutdown(mut self) -> Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.join()
    }

    /// Blocks until the service exits.
    pub fn wait(mut self) -> Result<()> {
        self.join()
    }

    fn join(&mut self) -> Result<()> {
        match self.thread.take().map(JoinHandle::join) {
            Some(Ok(r)) => r.map_err(|e| Error::io("review service", e)),
            Some(Err(_)) => Err(Error::Config("review service thread panicked".into())),
            None => Ok(()),
        }
    }
}

/// Binds `bind` (e.g. `127.0.0.1:8080`, port 0 for any) and serves the API
/// on a background thread.
pub fn serve_review_api(ctx: ReviewContext, bind: &str) -> Result<ReviewHandle> {
    let listener = std::net::TcpListener::bind(bind).map_err(|e| Error::io(bind, e))?;
    listener.set_nonblocking(true).map_err(|e| Error::io(bind, e))?;
    let addr = listener.local_addr().map_err(|e| Error::io(bind, e))?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(ctx);
    let thread = std::thread::spawn(move || -> std::io::Result<()> {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ReviewHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
