//! HTTP service: scoring, fusion, Best-of-N and annotation collection.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use spatial_reward::application::{best_of_n, BonOutput, CandidateSet};
use spatial_reward::fusion::{fuse, FitConfig, TieMode, WeightsFile, WeightsMeta};
use spatial_reward::scorer::{
    expected_score, normalize_logits, BackendMode, ImageRef, LogitRecord, LogitSource,
    OfflineLogits, PromptType, RemoteBackend, Scorer,
};
use spatial_reward::{AnnotationRecord, Dimension, FusionWeights, PartialScores, ScoreVector};
use tokio::sync::oneshot;

use crate::config::ServiceConfig;
use crate::error::{CliError, CliResult};
use crate::store::{
    presentation_swapped, PreferenceEvent, PreferenceSubmission, Store, StoreError, SubmitOutcome,
    SubmitStatus, IMAGES_DIR, LOGITS_FILE,
};

pub type DynScorer = Scorer<Box<dyn LogitSource>>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub scorer: Arc<DynScorer>,
    pub auth_token: Option<Arc<str>>,
    pub images_dir: PathBuf,
}

impl AppState {
    pub fn from_config(config: &ServiceConfig) -> CliResult<Self> {
        let store = Store::open(&config.data_dir, &config.weights_path)
            .map_err(|e| CliError::runtime(format!("cannot open {}: {e}", config.data_dir.display())))?;
        let source: Box<dyn LogitSource> = match config.backend.mode {
            BackendMode::RemoteService => Box::new(RemoteBackend::new(&config.backend)?),
            BackendMode::FileOffline => {
                let path = config.data_dir.join(LOGITS_FILE);
                let records: Vec<LogitRecord> = if path.exists() {
                    crate::files::read_records(&path)?
                } else {
                    Vec::new()
                };
                Box::new(OfflineLogits::new(records))
            }
        };
        Ok(Self {
            store: Arc::new(store),
            scorer: Arc::new(Scorer::new(source, config.backend.prompt_type)),
            auth_token: config.auth_token.as_deref().map(Arc::from),
            images_dir: config.data_dir.join(IMAGES_DIR),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/score", post(score))
        .route("/v1/fuse", post(fuse_scores))
        .route("/v1/bon", post(bon))
        .route("/v1/pairs/next", get(next_pair))
        .route("/v1/preferences", get(list_preferences).post(submit_preference))
        .route("/v1/annotations", post(submit_annotation))
        .route("/v1/fusion/fit", post(fit))
        .route("/v1/weights", get(current_weights))
        .route("/v1/images/{file}", get(image))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::UnknownPair(_) => StatusCode::NOT_FOUND,
            StoreError::Invalid(_) | StoreError::Fit(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Corrupt { .. } | StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<spatial_reward::Error> for ApiError {
    fn from(e: spatial_reward::Error) -> Self {
        let status = match e {
            spatial_reward::Error::Backend { .. } => StatusCode::BAD_GATEWAY,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(expected) = &state.auth_token else { return Ok(()) };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or("");
    // length leaks, contents do not
    let same = given.len() == expected.len()
        && given.bytes().zip(expected.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0;
    if same {
        Ok(())
    } else {
        Err(ApiError(StatusCode::UNAUTHORIZED, "missing or invalid bearer token".into()))
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub pairs: usize,
    pub preferences: usize,
    pub annotations: usize,
    pub events: usize,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let snap = state.store.snapshot();
    Json(Health {
        status: "ok".into(),
        pairs: snap.pairs.len(),
        preferences: snap.preferences.len(),
        annotations: snap.annotations.len(),
        events: snap.event_count,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub image_id: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub image_base64: Option<String>,
    /// Inline logits per dimension; when present the backend is not called.
    #[serde(default)]
    pub logits: Option<BTreeMap<Dimension, [f64; 5]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub image_id: String,
    pub scores: ScoreVector,
    pub prompt_type: PromptType,
}

async fn score(State(state): State<AppState>, Json(req): Json<ScoreRequest>) -> ApiResult<ScoreResponse> {
    let prompt_type = state.scorer.prompt_type();
    let scores = match req.logits {
        Some(logits) => {
            let mut partial = PartialScores::default();
            for (dimension, l) in logits {
                partial.set(dimension, expected_score(&normalize_logits(&l)?));
            }
            partial.to_vector()?
        }
        None => {
            let image = match (req.image_base64, req.image_ref) {
                (Some(b64), _) => ImageRef {
                    image_id: req.image_id.clone(),
                    source: spatial_reward::scorer::ImageSource::Inline(b64),
                },
                (None, Some(r)) => ImageRef::reference(req.image_id.clone(), r),
                (None, None) => ImageRef::id(req.image_id.clone()),
            };
            let scorer = state.scorer.clone();
            blocking(move || Ok(scorer.score_image(&image, &Dimension::ALL)?.to_vector()?)).await?
        }
    };
    Ok(Json(ScoreResponse {
        image_id: req.image_id,
        scores,
        prompt_type,
    }))
}

fn current_or(state: &AppState, weights: Option<FusionWeights>) -> FusionWeights {
    weights
        .or_else(|| state.store.snapshot().weights.as_ref().map(|w| w.weights))
        .unwrap_or_else(FusionWeights::equal)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuseRequest {
    pub scores: ScoreVector,
    /// Defaults to the service's current weights.
    #[serde(default)]
    pub weights: Option<FusionWeights>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuseResponse {
    pub fused: f64,
    pub weights: FusionWeights,
}

async fn fuse_scores(State(state): State<AppState>, Json(req): Json<FuseRequest>) -> Json<FuseResponse> {
    let weights = current_or(&state, req.weights);
    Json(FuseResponse {
        fused: fuse(&req.scores, &weights),
        weights,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BonRequest {
    #[serde(flatten)]
    pub set: CandidateSet,
    #[serde(default)]
    pub weights: Option<FusionWeights>,
}

async fn bon(State(state): State<AppState>, Json(req): Json<BonRequest>) -> ApiResult<BonOutput> {
    let weights = current_or(&state, req.weights);
    let ranked = best_of_n(&req.set, &weights)?;
    Ok(Json(BonOutput::new(&req.set.prompt_id, ranked)))
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
    #[serde(default)]
    reveal_scores: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub labeled: usize,
    pub total: usize,
}

/// A pair in serving order: `image_a_url` is the left image as shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServedPair {
    pub pair_id: String,
    pub image_a_url: String,
    pub image_b_url: String,
    pub presented_swapped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_a: Option<ScoreVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_b: Option<ScoreVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextPairResponse {
    /// `None` once the annotator has labelled every pair.
    pub pair: Option<ServedPair>,
    pub progress: Progress,
}

async fn next_pair(State(state): State<AppState>, Query(q): Query<NextQuery>) -> ApiResult<NextPairResponse> {
    if q.annotator.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "annotator must not be empty".into()));
    }
    let snap = state.store.snapshot();
    let progress = Progress {
        labeled: snap.labeled_by(&q.annotator),
        total: snap.pairs.len(),
    };
    let pair = snap.next_pair(&q.annotator).map(|p| {
        let swapped = presentation_swapped(&p.pair_id, &q.annotator);
        let url = |file: &str| format!("/v1/images/{file}");
        let (left, right) = if swapped {
            ((p.image_b_file(), p.scores_b), (p.image_a_file(), p.scores_a))
        } else {
            ((p.image_a_file(), p.scores_a), (p.image_b_file(), p.scores_b))
        };
        ServedPair {
            pair_id: p.pair_id.clone(),
            image_a_url: url(left.0),
            image_b_url: url(right.0),
            presented_swapped: swapped,
            scores_a: left.1.filter(|_| q.reveal_scores),
            scores_b: right.1.filter(|_| q.reveal_scores),
        }
    });
    Ok(Json(NextPairResponse { pair, progress }))
}

async fn submit_preference(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(sub): Json<PreferenceSubmission>,
) -> ApiResult<SubmitOutcome> {
    authorize(&state, &headers)?;
    let store = state.store.clone();
    Ok(Json(blocking(move || Ok(store.submit_preference(sub)?)).await?))
}

async fn list_preferences(State(state): State<AppState>) -> Json<Vec<PreferenceEvent>> {
    Json(state.store.snapshot().preferences.values().cloned().collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationSubmission {
    #[serde(flatten)]
    pub record: AnnotationRecord,
    #[serde(default)]
    pub submitted_at: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    pub status: SubmitStatus,
}

async fn submit_annotation(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(sub): Json<AnnotationSubmission>,
) -> ApiResult<AnnotationOutcome> {
    authorize(&state, &headers)?;
    let store = state.store.clone();
    let status = blocking(move || Ok(store.submit_annotation(sub.record, sub.submitted_at)?)).await?;
    Ok(Json(AnnotationOutcome { status }))
}

/// Optional overrides for the fit; everything else uses the defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitRequest {
    #[serde(default)]
    pub tie_mode: Option<TieMode>,
    #[serde(default)]
    pub l2: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub weights: FusionWeights,
    pub pair_count_used: usize,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tie_mode: TieMode,
}

async fn fit(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<FitSummary> {
    authorize(&state, &headers)?;
    let req: FitRequest = if body.iter().all(u8::is_ascii_whitespace) {
        FitRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let defaults = FitConfig::default();
    let config = FitConfig {
        tie_mode: req.tie_mode.unwrap_or(defaults.tie_mode),
        l2: req.l2.unwrap_or(defaults.l2),
        max_iters: req.max_iters.unwrap_or(defaults.max_iters),
        ..defaults
    };
    let store = state.store.clone();
    let file = blocking(move || Ok(store.fit(&config)?)).await?;
    Ok(Json(FitSummary {
        weights: file.weights,
        pair_count_used: file.meta.pair_count_used,
        final_loss: file.meta.final_loss,
        iterations: file.meta.iterations,
        converged: file.meta.converged,
        tie_mode: file.meta.tie_mode,
    }))
}

/// Current weights; `meta` is absent while the equal-weight default is in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsResponse {
    #[serde(flatten)]
    pub weights: FusionWeights,
    #[serde(default)]
    pub meta: Option<WeightsMeta>,
}

async fn current_weights(State(state): State<AppState>) -> Json<WeightsResponse> {
    let snap = state.store.snapshot();
    Json(match &snap.weights {
        Some(WeightsFile { weights, meta }) => WeightsResponse {
            weights: *weights,
            meta: Some(meta.clone()),
        },
        None => WeightsResponse {
            weights: FusionWeights::equal(),
            meta: None,
        },
    })
}

async fn image(State(state): State<AppState>, UrlPath(file): UrlPath<String>) -> Result<Response, ApiError> {
    if file.is_empty() || file.starts_with('.') || file.contains(['/', '\\']) {
        return Err(ApiError(StatusCode::BAD_REQUEST, "invalid image name".into()));
    }
    let path = state.images_dir.join(&file);
    let bytes = blocking(move || {
        std::fs::read(&path).map_err(|_| ApiError(StatusCode::NOT_FOUND, format!("no image {file:?}")))
    })
    .await?;
    let mime = sniff_mime(&bytes).unwrap_or("application/octet-stream");
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

/// Sniffs the common image formats from their magic bytes.
fn sniff_mime(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(b"\x89PNG") {
        Some("image/png")
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some("image/jpeg")
    } else if bytes.starts_with(b"GIF8") {
        Some("image/gif")
    } else if bytes.len() > 12 && &bytes[..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        Some("image/webp")
    } else {
        None
    }
}

/// A service running on a background thread.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl RunningService {
    /// Graceful shutdown; waits for in-flight requests.
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

fn bind(addr: SocketAddr) -> CliResult<std::net::TcpListener> {
    let listener = std::net::TcpListener::bind(addr)
        .map_err(|e| CliError::runtime(format!("cannot listen on {addr}: {e}")))?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Starts the service on its own runtime thread. Port 0 picks a free port.
pub fn spawn(config: &ServiceConfig) -> CliResult<RunningService> {
    let state = AppState::from_config(config)?;
    let listener = bind(config.listen)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            let _ = axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Runs in the foreground until Ctrl-C.
pub fn run(config: &ServiceConfig) -> CliResult<()> {
    let state = AppState::from_config(config)?;
    let listener = bind(config.listen)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
