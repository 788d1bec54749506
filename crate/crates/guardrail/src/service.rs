//! Read-only HTTP API over an immutable in-memory snapshot of the data
//! directory. Reloading builds a fresh snapshot and swaps the reference, so
//! a request sees either the old or the new snapshot, never a mix.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use guardrail_core::{PeerProvider, StrategySpec};
use serde::Serialize;

use crate::canonical::{digest, to_canonical_json};
use crate::dataset::{ItemSeries, TimeSeriesDataset};
use crate::engine::{self, EngineError, ErrorKind, StrategyRequest, ENGINE_VERSION};
use crate::precompute::{dataset_digest, PrecomputeIndex};

pub const VERSION_HEADER: &str = "x-guardrail-version";
pub const DATASET_DIGEST_HEADER: &str = "x-dataset-digest";
pub const CONTENT_DIGEST_HEADER: &str = "x-content-digest";

pub struct LoadedDataset {
    pub dataset: TimeSeriesDataset,
    pub digest: String,
    /// Precomputed sets for exactly this dataset content.
    pub precomputed: Option<(PathBuf, PrecomputeIndex)>,
}

impl LoadedDataset {
    fn cached(&self, focal: &str, spec: &StrategySpec) -> Option<String> {
        let (dir, index) = self.precomputed.as_ref()?;
        let entry = index.lookup(focal, spec)?;
        let body = std::fs::read_to_string(dir.join(&entry.key)).ok()?;
        (digest(body.as_bytes()) == entry.digest).then_some(body)
    }
}

#[derive(Default)]
pub struct Snapshot {
    pub datasets: BTreeMap<String, LoadedDataset>,
}

impl Snapshot {
    /// Every `*.json` file directly under `data_dir` is a dataset.
    pub fn load(data_dir: &Path) -> anyhow::Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir)
            .map_err(|e| anyhow::anyhow!("reading data dir {}: {e}", data_dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut snapshot = Self::default();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let dataset: TimeSeriesDataset =
                serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            let digest = dataset_digest(&dataset)?;
            let dir = data_dir.join("precomputed").join(&dataset.dataset_id);
            let precomputed =
                PrecomputeIndex::load(&dir)?.filter(|index| index.dataset_digest == digest).map(|index| (dir, index));
            tracing::info!(dataset = %dataset.dataset_id, items = dataset.items.len(), "loaded");
            snapshot.datasets.insert(dataset.dataset_id.clone(), LoadedDataset { dataset, digest, precomputed });
        }
        Ok(snapshot)
    }

    fn get(&self, id: &str) -> Result<&LoadedDataset, EngineError> {
        self.datasets.get(id).ok_or_else(|| EngineError::not_found(format!("unknown dataset `{id}`")))
    }
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    provider: Arc<dyn PeerProvider + Send + Sync>,
    data_dir: PathBuf,
}

impl AppState {
    pub fn new(data_dir: PathBuf, provider: Arc<dyn PeerProvider + Send + Sync>) -> anyhow::Result<Self> {
        let snapshot = Snapshot::load(&data_dir)?;
        Ok(Self { snapshot: RwLock::new(Arc::new(snapshot)), provider, data_dir })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Loads the data directory again and swaps it in atomically. On error
    /// the current snapshot stays in place.
    pub fn reload(&self) -> anyhow::Result<()> {
        let fresh = Arc::new(Snapshot::load(&self.data_dir)?);
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = fresh;
        Ok(())
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/items", get(list_items))
        .route("/datasets/{id}/series", get(series))
        .route("/datasets/{id}/guardrails", get(guardrails))
        .route("/datasets/{id}/rank", get(rank))
        .route("/datasets/{id}/chart", get(chart))
        .fallback(|| async { ApiError(EngineError::not_found("no such endpoint")) })
        .with_state(state)
}

struct ApiError(EngineError);

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        Self(e)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    kind: ErrorKind,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let message = if self.0.kind == ErrorKind::Internal {
            tracing::error!(error = %self.0, diagnostics = ?self.0.diagnostics, "request failed");
            "internal error"
        } else {
            &self.0.message
        };
        let body = to_canonical_json(&ErrorBody { error: ErrorDetail { kind: self.0.kind, message } })
            .unwrap_or_else(|_| r#"{"error":{"kind":"internal","message":"internal error"}}"#.into());
        let mut response = (status, body).into_response();
        set_headers(&mut response, None);
        response
    }
}

fn set_headers(response: &mut Response, dataset_digest: Option<&str>) {
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    headers.insert(VERSION_HEADER, HeaderValue::from_static(ENGINE_VERSION));
    if let Some(d) = dataset_digest.and_then(|d| HeaderValue::from_str(d).ok()) {
        headers.insert(DATASET_DIGEST_HEADER, d);
    }
}

fn json_response(body: String, dataset_digest: Option<&str>) -> Response {
    let content_digest = digest(body.as_bytes());
    let mut response = body.into_response();
    set_headers(&mut response, dataset_digest);
    if let Ok(v) = HeaderValue::from_str(&content_digest) {
        response.headers_mut().insert(CONTENT_DIGEST_HEADER, v);
    }
    response
}

fn canonical<T: Serialize>(value: &T) -> Result<String, ApiError> {
    Ok(to_canonical_json(value).map_err(EngineError::from)?)
}

type Params = Query<HashMap<String, String>>;

fn required<'a>(params: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    params
        .get(key)
        .map(String::as_str)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| EngineError::bad_request(format!("missing query parameter `{key}`")).into())
}

fn optional<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    params
        .get(key)
        .map(|raw| {
            raw.parse().map_err(|_| EngineError::bad_request(format!("invalid value `{raw}` for `{key}`")).into())
        })
        .transpose()
}

fn strategy_request(params: &HashMap<String, String>) -> Result<StrategyRequest, ApiError> {
    Ok(StrategyRequest {
        strategy: required(params, "strategy")?.to_string(),
        n: optional(params, "n")?,
        seed: optional(params, "seed")?,
        k: optional(params, "k")?,
    })
}

/// Runs a possibly blocking computation off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, EngineError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| EngineError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError)
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    id: &'a str,
    direction: guardrail_core::Direction,
    item_count: usize,
    timesteps: usize,
    window: Option<Window>,
    digest: &'a str,
}

#[derive(Serialize)]
struct Window {
    start: chrono::NaiveDate,
    end: chrono::NaiveDate,
}

async fn list_datasets(State(state): State<Shared>) -> Result<Response, ApiError> {
    let snapshot = state.snapshot();
    let summaries: Vec<DatasetSummary> = snapshot
        .datasets
        .values()
        .map(|l| DatasetSummary {
            id: &l.dataset.dataset_id,
            direction: l.dataset.direction,
            item_count: l.dataset.items.len(),
            timesteps: l.dataset.timesteps.len(),
            window: l.dataset.window().map(|(start, end)| Window { start, end }),
            digest: &l.digest,
        })
        .collect();
    Ok(json_response(canonical(&summaries)?, None))
}

#[derive(Serialize)]
struct ItemSummary<'a> {
    id: &'a str,
    name: &'a str,
}

async fn list_items(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let snapshot = state.snapshot();
    let loaded = snapshot.get(&id)?;
    let items: Vec<ItemSummary> =
        loaded.dataset.items.iter().map(|i| ItemSummary { id: &i.item_id, name: &i.display_name }).collect();
    Ok(json_response(canonical(&items)?, Some(&loaded.digest)))
}

#[derive(Serialize)]
struct SeriesBody<'a> {
    dataset_id: &'a str,
    timesteps: &'a [chrono::NaiveDate],
    items: Vec<&'a ItemSeries>,
}

async fn series(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(params): Params,
) -> Result<Response, ApiError> {
    let snapshot = state.snapshot();
    let loaded = snapshot.get(&id)?;
    let ds = &loaded.dataset;
    let mut items = Vec::new();
    for wanted in required(&params, "items")?.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        items.push(
            ds.item(wanted)
                .ok_or_else(|| EngineError::not_found(format!("unknown item `{wanted}` in dataset `{id}`")))?,
        );
    }
    let body = SeriesBody { dataset_id: &ds.dataset_id, timesteps: &ds.timesteps, items };
    Ok(json_response(canonical(&body)?, Some(&loaded.digest)))
}

async fn guardrails(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(params): Params,
) -> Result<Response, ApiError> {
    let focal = required(&params, "focal")?.to_string();
    let request = strategy_request(&params)?;
    let spec = request
        .spec()?
        .ok_or_else(|| EngineError::bad_request("the control condition has no guardrails; use /chart"))?;
    let snapshot = state.snapshot();
    let digest = snapshot.get(&id)?.digest.clone();
    let body = blocking(move || {
        let loaded = snapshot.get(&id)?;
        if let Some(body) = loaded.cached(&focal, &spec) {
            return Ok(body);
        }
        engine::guardrails_json(&loaded.dataset, &focal, &spec, &*state.provider)
    })
    .await?;
    Ok(json_response(body, Some(&digest)))
}

async fn rank(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(params): Params,
) -> Result<Response, ApiError> {
    let snapshot = state.snapshot();
    let loaded = snapshot.get(&id)?;
    let judgment = engine::rank(&loaded.dataset, required(&params, "item")?)?;
    Ok(json_response(canonical(&judgment)?, Some(&loaded.digest)))
}

async fn chart(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(params): Params,
) -> Result<Response, ApiError> {
    let focal = required(&params, "focal")?.to_string();
    let request = strategy_request(&params)?;
    request.spec()?;
    let snapshot = state.snapshot();
    let digest = snapshot.get(&id)?.digest.clone();
    let body = blocking(move || {
        let loaded = snapshot.get(&id)?;
        engine::chart_json(&loaded.dataset, &focal, &request, &*state.provider)
    })
    .await?;
    Ok(json_response(body, Some(&digest)))
}

/// Serves until Ctrl-C. On Unix, SIGHUP reloads the data directory.
pub async fn serve(state: Shared, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    #[cfg(unix)]
    {
        let state = state.clone();
        tokio::spawn(async move {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut hangups) = signal(SignalKind::hangup()) else { return };
            while hangups.recv().await.is_some() {
                match state.reload() {
                    Ok(()) => tracing::info!("reloaded data directory"),
                    Err(e) => tracing::error!(error = %e, "reload failed; keeping previous snapshot"),
                }
            }
        });
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
