use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::RwLock;
use tower_http::services::ServeDir;

use super::{
    default_log_path, now_utc_seconds, Label, PairFilter, PairInfo, ReviewState, Stats, VerdictLog,
};
use crate::census::{CensusSession, Pool, SampleSource};
use crate::error::{Error, Result};
use crate::ingest::{Corpus, PnmImage};
use crate::similarity::nearest_neighbor_with;

/// A human-mode session opened for review, with its verdict log.
#[derive(Debug)]
pub struct ReviewService {
    state: ReviewState,
    log: VerdictLog,
    session_path: PathBuf,
    pool: Corpus,
    training: Option<Corpus>,
}

impl ReviewService {
    /// Loads the session, its pool and its log, replays the log and
    /// rewrites the session file with the replayed state.
    pub fn open(session_path: impl AsRef<Path>) -> Result<Self> {
        let session_path = session_path.as_ref().to_path_buf();
        let session = CensusSession::read(&session_path)?;
        let config = session.config.clone();
        if !config.mode.is_human() {
            return Err(Error::InvalidInput(format!(
                "{}: session is not in human mode",
                session_path.display()
            )));
        }
        let crate::census::SourceDescriptor::Manifest { path } = &config.source else {
            return Err(Error::InvalidInput(format!(
                "{}: only pool sessions can be reviewed",
                session_path.display()
            )));
        };
        let pool = Corpus::load(path)?;
        let source = SampleSource::Pool(Pool::new(pool.items.clone(), config.metric, config.k)?);
        let training = config.training.as_ref().map(Corpus::load).transpose()?;
        let log_path = session
            .verdict_log
            .as_ref()
            .map(|l| l.path.clone())
            .unwrap_or_else(|| default_log_path(&session_path));
        let (log, verdicts) = VerdictLog::open(&log_path)?;
        if let Some(recorded) = &session.verdict_log {
            if recorded.records > log.records() {
                eprintln!(
                    "warning: session recorded {} verdicts but {} holds {}",
                    recorded.records,
                    log_path.display(),
                    log.records()
                );
            }
        }
        let state = ReviewState::replay(config, source, verdicts)?;
        let service = Self {
            state,
            log,
            session_path,
            pool,
            training,
        };
        service.persist()?;
        Ok(service)
    }

    pub fn state(&self) -> &ReviewState {
        &self.state
    }

    pub fn session(&self) -> Result<CensusSession> {
        self.state.session(Some(self.log.info()))
    }

    pub fn persist(&self) -> Result<()> {
        self.session()?.write(&self.session_path)
    }

    /// Records a verdict durably, then applies it and saves the session.
    pub fn submit(&mut self, req: VerdictRequest) -> Result<Stats> {
        let verdict = self.state.verdict_for(
            &req.pair_key,
            req.label,
            req.note,
            req.item,
            now_utc_seconds(),
        )?;
        self.log.append(&verdict)?;
        self.state.apply_verdict(verdict)?;
        self.persist()?;
        self.state.stats()
    }

    fn image_png(&self, corpus: &Corpus, id: &str) -> Result<Vec<u8>> {
        let path = corpus
            .image_path(id)
            .ok_or_else(|| Error::NotFound(format!("no image for item {id:?}")))?;
        PnmImage::read(path)?.to_png()
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct VerdictRequest {
    pub pair_key: String,
    pub label: Label,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub item: Option<String>,
}

pub type AppState = Arc<RwLock<ReviewService>>;

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::InvalidArgument(_) | Error::InvalidInput(_) => StatusCode::BAD_REQUEST,
            Error::NoEstimate(_) | Error::UndefinedBound(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Serialize)]
struct PairView {
    #[serde(flatten)]
    pair: PairInfo,
    image_a: String,
    image_b: String,
}

#[derive(Deserialize)]
struct PairsQuery {
    #[serde(default)]
    state: PairFilter,
    limit: Option<usize>,
}

#[derive(Deserialize)]
struct NeighborQuery {
    item: String,
}

fn image_url(id: &str) -> String {
    format!("/img/{}", encode_segment(id))
}

fn encode_segment(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                (b as char).to_string()
            }
            _ => format!("%{b:02X}"),
        })
        .collect()
}

async fn get_session(State(app): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    let svc = app.read().await;
    let session = svc.session()?;
    Ok(Json(json!({
        "config": session.config,
        "current_probe": session.current_probe,
        "trajectory": session.trajectory,
        "outcome": session.outcome,
        "report": session.report,
        "warnings": session.warnings,
        "verdict_log": session.verdict_log,
        "stats": svc.state.stats()?,
    })))
}

async fn get_pairs(
    State(app): State<AppState>,
    Query(q): Query<PairsQuery>,
) -> ApiResult<Json<Vec<PairView>>> {
    let svc = app.read().await;
    let pairs = svc.state.pairs(q.state, q.limit.unwrap_or(50));
    Ok(Json(
        pairs
            .into_iter()
            .map(|pair| PairView {
                image_a: image_url(&pair.id_a),
                image_b: image_url(&pair.id_b),
                pair,
            })
            .collect(),
    ))
}

async fn post_verdict(
    State(app): State<AppState>,
    Json(req): Json<VerdictRequest>,
) -> ApiResult<Json<Stats>> {
    let mut svc = app.write().await;
    Ok(Json(svc.submit(req)?))
}

async fn get_stats(State(app): State<AppState>) -> ApiResult<Json<Stats>> {
    Ok(Json(app.read().await.state.stats()?))
}

async fn get_neighbor(
    State(app): State<AppState>,
    Query(q): Query<NeighborQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let svc = app.read().await;
    let training = svc
        .training
        .as_ref()
        .ok_or_else(|| Error::NotFound("session has no training corpus".into()))?;
    let query = svc
        .pool
        .get(&q.item)
        .ok_or_else(|| Error::NotFound(format!("no pool item {:?}", q.item)))?;
    let nn = nearest_neighbor_with(query, &training.items, svc.state.config().metric)?;
    let url = training
        .image_path(&nn.id)
        .map(|_| format!("/img/training/{}", encode_segment(&nn.id)));
    Ok(Json(json!({
        "item": q.item,
        "id": nn.id,
        "distance": nn.distance,
        "image_url": url,
    })))
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn get_image(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let svc = app.read().await;
    Ok(png_response(svc.image_png(&svc.pool, &id)?))
}

async fn get_training_image(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let svc = app.read().await;
    let training = svc
        .training
        .as_ref()
        .ok_or_else(|| Error::NotFound("session has no training corpus".into()))?;
    Ok(png_response(svc.image_png(training, &id)?))
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>birthday-census review</title></head>
<body>
<h1>birthday-census review service</h1>
<p>No UI assets were supplied. Start the server with <code>--assets DIR</code> to serve a
built review UI, or use the JSON API directly:</p>
<ul>
<li><a href=\"/api/session\">/api/session</a></li>
<li><a href=\"/api/stats\">/api/stats</a></li>
<li><a href=\"/api/pairs?state=pending&amp;limit=20\">/api/pairs?state=pending&amp;limit=20</a></li>
</ul>
</body></html>
";

/// All routes. Static files come from `assets` when given.
pub fn router(app: AppState, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/pairs", get(get_pairs))
        .route("/api/verdict", post(post_verdict))
        .route("/api/stats", get(get_stats))
        .route("/api/neighbor", get(get_neighbor))
        .route("/img/{id}", get(get_image))
        .route("/img/training/{id}", get(get_training_image))
        .with_state(app);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub session: PathBuf,
    pub listen: String,
    pub assets: Option<PathBuf>,
}

/// Runs the review service until SIGINT or SIGTERM.
pub fn serve(opts: &ServeOptions) -> Result<()> {
    let service = ReviewService::open(&opts.session)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io(&opts.session, e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&opts.listen)
            .await
            .map_err(|e| Error::io(format!("listen address {}", opts.listen), e))?;
        let addr: SocketAddr = listener
            .local_addr()
            .map_err(|e| Error::io(format!("listen address {}", opts.listen), e))?;
        eprintln!("review service listening on http://{addr}");
        let app: AppState = Arc::new(RwLock::new(service));
        axum::serve(listener, router(Arc::clone(&app), opts.assets.as_deref()))
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(|e| Error::io(format!("listen address {}", opts.listen), e))?;
        // verdicts are already synced; this leaves the session file current
        let svc = app.read().await;
        svc.persist()
    })
}

async fn shutdown_signal() {
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
