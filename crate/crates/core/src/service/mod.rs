//! HTTP/1.1 JSON pricing service.
//!
//! | method | path                     | body                                   |
//! |--------|--------------------------|----------------------------------------|
//! | POST   | `/datasets?target=NAME`  | CSV                                    |
//! | POST   | `/models`                | `{dataset_id, target_name?, lambda?, train_fraction?, split_seed?, n_bins?}` |
//! | GET    | `/models/{id}`           |                                        |
//! | POST   | `/models/{id}/predict`   | `{instance}`                           |
//! | POST   | `/models/{id}/explain`   | `{instance, seed?, num_samples?, num_features?}` |
//! | POST   | `/models/{id}/whatif`    | `{instance, overrides, seed?}`         |
//! | POST   | `/ingest/frames`         | length-prefixed packet records         |
//! | GET    | `/animals`               |                                        |
//! | GET    | `/health`                |                                        |
//!
//! Every non-2xx response carries a single [`ApiError`] body.

mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bundle::{self, BundleError, ModelRegistryEntry, TrainOptions};
use crate::data::{self, DataError, DEFAULT_TARGET};
use crate::edge::packet::{IngestResponse, PacketResult, PacketStatus, REASON_CHECKSUM};
use crate::edge::{decode_stream, FeatureExtractor, PacketKind, SyntheticExtractor};
use crate::explain::{self, ExplainError, Explanation, ExplainerConfig, DEFAULT_SEED};
use crate::linreg::{LinregError, RegressionMetrics};

pub use store::{AnimalRow, Store, StoreError, StreamRows};

/// Environment variable naming the persistence root.
pub const DATA_ROOT_ENV: &str = "MARTLENS_DATA_ROOT";
pub const DEFAULT_PORT: u16 = 8080;
const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    Unprocessable,
    Internal,
}

impl ErrorCode {
    fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }

    fn schema_mismatch(missing: Vec<String>, extra: Vec<String>) -> Self {
        Self::new(ErrorCode::Unprocessable, "instance does not match the model schema")
            .with_detail(json!({ "missing": missing, "extra": extra }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&self).expect("api error serializes");
        (
            self.code.status(),
            [(header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::InvalidId(_) => ApiError::new(ErrorCode::NotFound, e.to_string()),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

impl From<LinregError> for ApiError {
    fn from(e: LinregError) -> Self {
        match e {
            LinregError::SchemaMismatch { missing, extra } => ApiError::schema_mismatch(missing, extra),
            LinregError::SingularMatrix { ref feature } => {
                let feature = feature.clone();
                ApiError::new(ErrorCode::Unprocessable, e.to_string()).with_detail(json!({ "feature": feature }))
            }
            other => ApiError::new(ErrorCode::Unprocessable, other.to_string()),
        }
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::SchemaMismatch { missing, extra } => ApiError::schema_mismatch(missing, extra),
            ExplainError::Fit(f) => f.into(),
            other => ApiError::new(ErrorCode::Unprocessable, other.to_string()),
        }
    }
}

impl From<BundleError> for ApiError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Fit(f) => f.into(),
            BundleError::Data(d) => ApiError::new(ErrorCode::Unprocessable, d.to_string()),
            BundleError::Discretize(d) => ApiError::new(ErrorCode::Unprocessable, d.to_string()),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

fn json_response(status: StatusCode, value: &impl Serialize) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid JSON body: {e}")))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub extractor: Arc<dyn FeatureExtractor>,
}

impl AppState {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Ok(Self {
            store: Arc::new(Store::open(root)?),
            extractor: Arc::new(SyntheticExtractor::default()),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload_dataset))
        .route("/models", post(train_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/predict", post(predict))
        .route("/models/{id}/explain", post(explain_handler))
        .route("/models/{id}/whatif", post(whatif))
        .route("/ingest/frames", post(ingest_frames))
        .route("/animals", get(animals))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such route") })
        .method_not_allowed_fallback(|| async { ApiError::new(ErrorCode::BadRequest, "method not allowed") })
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Response {
    if state.store.is_writable() {
        json_response(StatusCode::OK, &json!({ "status": "ok" }))
    } else {
        let mut resp = ApiError::new(ErrorCode::Internal, "persistence root is not writable").into_response();
        *resp.status_mut() = StatusCode::SERVICE_UNAVAILABLE;
        resp
    }
}

#[derive(Deserialize)]
struct UploadQuery {
    target: Option<String>,
}

async fn upload_dataset(State(state): State<AppState>, Query(q): Query<UploadQuery>, body: Bytes) -> ApiResult {
    let target = q.target.unwrap_or_else(|| DEFAULT_TARGET.to_string());
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::new(ErrorCode::BadRequest, "CSV must be UTF-8"))?;
    let dataset = data::parse_csv(text, &target).map_err(|e| {
        let detail = match &e {
            DataError::Parse { row, col, .. } => json!({ "row": row, "col": col }),
            _ => serde_json::Value::Null,
        };
        let err = ApiError::new(ErrorCode::BadRequest, e.to_string());
        if detail.is_null() {
            err
        } else {
            err.with_detail(detail)
        }
    })?;
    let id = state.store.put_dataset(&body)?;
    Ok(json_response(
        StatusCode::CREATED,
        &json!({
            "dataset_id": id,
            "rows": dataset.len(),
            "features": dataset.schema.feature_names,
            "target_name": target,
        }),
    ))
}

#[derive(Deserialize)]
struct TrainRequest {
    dataset_id: String,
    target_name: Option<String>,
    lambda: Option<f64>,
    train_fraction: Option<f64>,
    split_seed: Option<u64>,
    n_bins: Option<usize>,
}

#[derive(Serialize)]
struct TrainResponse {
    model_id: String,
    dataset_id: String,
    created: bool,
    metrics: RegressionMetrics,
    test_metrics: Option<RegressionMetrics>,
    train_rows: usize,
    test_rows: usize,
}

async fn train_model(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: TrainRequest = parse_body(&body)?;
    let csv = state.store.get_dataset(&req.dataset_id)?;
    let defaults = TrainOptions::default();
    let options = TrainOptions {
        lambda: req.lambda.unwrap_or(defaults.lambda),
        train_fraction: req.train_fraction.unwrap_or(defaults.train_fraction),
        split_seed: req.split_seed.unwrap_or(defaults.split_seed),
        n_bins: req.n_bins.unwrap_or(defaults.n_bins),
    };
    let target = req.target_name.unwrap_or_else(|| DEFAULT_TARGET.to_string());
    let dataset_id = req.dataset_id.clone();
    let outcome = blocking(move || {
        let text = String::from_utf8(csv).map_err(|_| ApiError::new(ErrorCode::Internal, "stored dataset is not UTF-8"))?;
        let dataset = data::parse_csv(&text, &target).map_err(|e| ApiError::new(ErrorCode::Unprocessable, e.to_string()))?;
        Ok(bundle::train(&dataset, &dataset_id, &options)?)
    })
    .await?;
    let (entry, created) = state.store.put_model(ModelRegistryEntry::new(outcome.artifact))?;
    // 201 on every successful train; `created` tells a retrain apart.
    Ok(json_response(
        StatusCode::CREATED,
        &TrainResponse {
            model_id: entry.model_id.clone(),
            dataset_id: req.dataset_id,
            created,
            metrics: outcome.train_metrics,
            test_metrics: outcome.test_metrics,
            train_rows: outcome.train_rows,
            test_rows: outcome.test_rows,
        },
    ))
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    // verify the content hash before serving the stored bytes verbatim
    state.store.get_model(&id)?;
    let bytes = state.store.get_model_bytes(&id)?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Deserialize)]
struct InstanceRequest {
    instance: BTreeMap<String, f64>,
    seed: Option<u64>,
    num_samples: Option<usize>,
    num_features: Option<usize>,
}

impl InstanceRequest {
    fn config(&self) -> ExplainerConfig {
        let defaults = ExplainerConfig::default();
        ExplainerConfig {
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            num_samples: self.num_samples.unwrap_or(defaults.num_samples),
            num_features: self.num_features.unwrap_or(defaults.num_features),
            ..defaults
        }
    }
}

async fn predict(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: InstanceRequest = parse_body(&body)?;
    let entry = state.store.get_model(&id)?;
    let price = entry.artifact.model.predict_map(&req.instance)?;
    Ok(json_response(StatusCode::OK, &json!({ "model_id": id, "price": price })))
}

fn explain_entry(entry: &ModelRegistryEntry, instance: &BTreeMap<String, f64>, cfg: &ExplainerConfig) -> ApiResult<Explanation> {
    Ok(explain::explain_map(
        &entry.artifact.model,
        &entry.artifact.discretization,
        instance,
        cfg,
    )?)
}

async fn explain_handler(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: InstanceRequest = parse_body(&body)?;
    let entry = state.store.get_model(&id)?;
    let cfg = req.config();
    let explanation = blocking(move || explain_entry(&entry, &req.instance, &cfg)).await?;
    Ok(json_response(StatusCode::OK, &explanation))
}

#[derive(Deserialize)]
struct WhatIfRequest {
    instance: BTreeMap<String, f64>,
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
    seed: Option<u64>,
    num_samples: Option<usize>,
    num_features: Option<usize>,
}

#[derive(Serialize)]
struct PricedExplanation {
    price: f64,
    explanation: Explanation,
}

#[derive(Serialize)]
struct WhatIfResponse {
    before: PricedExplanation,
    after: PricedExplanation,
    delta: f64,
}

async fn whatif(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: WhatIfRequest = parse_body(&body)?;
    let entry = state.store.get_model(&id)?;
    let unknown: Vec<String> = req
        .overrides
        .keys()
        .filter(|k| !entry.artifact.model.feature_names.contains(k))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ApiError::new(ErrorCode::Unprocessable, "override refers to an unknown feature")
            .with_detail(json!({ "unknown": unknown })));
    }
    let defaults = ExplainerConfig::default();
    let cfg = ExplainerConfig {
        seed: req.seed.unwrap_or(DEFAULT_SEED),
        num_samples: req.num_samples.unwrap_or(defaults.num_samples),
        num_features: req.num_features.unwrap_or(defaults.num_features),
        ..defaults
    };
    let response = blocking(move || {
        let before = explain_entry(&entry, &req.instance, &cfg)?;
        let mut changed = req.instance.clone();
        changed.extend(req.overrides.iter().map(|(k, v)| (k.clone(), *v)));
        let after = explain_entry(&entry, &changed, &cfg)?;
        Ok(WhatIfResponse {
            delta: after.predicted_value - before.predicted_value,
            before: PricedExplanation {
                price: before.predicted_value,
                explanation: before,
            },
            after: PricedExplanation {
                price: after.predicted_value,
                explanation: after,
            },
        })
    })
    .await?;
    Ok(json_response(StatusCode::OK, &response))
}

fn nack(stream_id: &str, seq: u64, reason: impl Into<String>) -> PacketResult {
    PacketResult {
        stream_id: stream_id.to_string(),
        seq,
        status: PacketStatus::Nack,
        duplicate: false,
        reason: Some(reason.into()),
    }
}

async fn ingest_frames(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let packets = decode_stream(&body).map_err(|e| ApiError::new(ErrorCode::BadRequest, e.to_string()))?;
    let mut results = Vec::with_capacity(packets.len());
    let mut touched: BTreeMap<String, bool> = BTreeMap::new();

    for packet in packets {
        let sid = packet.stream_id.clone();
        if !packet.verify() {
            results.push(nack(&sid, packet.seq, REASON_CHECKSUM));
            continue;
        }
        let handle = match state.store.stream(&sid) {
            Ok(h) => h,
            Err(e) => {
                results.push(nack(&sid, packet.seq, e.to_string()));
                continue;
            }
        };
        let mut rows = handle.lock().await;
        touched.entry(sid.clone()).or_insert(false);
        if rows.rows.contains_key(&packet.seq) {
            results.push(PacketResult {
                stream_id: sid,
                seq: packet.seq,
                status: PacketStatus::Ack,
                duplicate: true,
                reason: None,
            });
            continue;
        }
        let named = match packet.kind {
            PacketKind::Frame => packet.frame().map(|f| state.extractor.extract_named(&f)),
            PacketKind::Features => packet.features(),
        };
        let named = match named {
            Ok(n) if n.values().all(|v| v.is_finite()) && !n.is_empty() => n,
            Ok(_) => {
                results.push(nack(&sid, packet.seq, "features must be finite and non-empty"));
                continue;
            }
            Err(e) => {
                results.push(nack(&sid, packet.seq, e.to_string()));
                continue;
            }
        };
        let names: Vec<String> = named.keys().cloned().collect();
        if rows.columns.is_empty() && rows.rows.is_empty() {
            rows.columns = names;
        } else {
            let mut expected = rows.columns.clone();
            expected.sort();
            if expected != names {
                results.push(nack(&sid, packet.seq, "feature names differ from the stream's columns"));
                continue;
            }
        }
        let values: Vec<f64> = rows.columns.iter().map(|c| named[c]).collect();
        rows.rows.insert(packet.seq, values);
        touched.insert(sid.clone(), true);
        results.push(PacketResult {
            stream_id: sid,
            seq: packet.seq,
            status: PacketStatus::Ack,
            duplicate: false,
            reason: None,
        });
    }

    // Persist before acknowledging.
    let mut highest_contiguous = BTreeMap::new();
    for (sid, dirty) in touched {
        let handle = state.store.stream(&sid)?;
        let rows = handle.lock().await;
        if dirty {
            if let Err(e) = state.store.persist_stream(&sid, &rows) {
                return Err(ApiError::new(ErrorCode::Internal, e.to_string()));
            }
        }
        highest_contiguous.insert(sid, rows.highest_contiguous());
    }
    Ok(json_response(
        StatusCode::OK,
        &IngestResponse {
            results,
            highest_contiguous,
        },
    ))
}

async fn animals(State(state): State<AppState>) -> ApiResult {
    let rows = state.store.animals().await?;
    Ok(json_response(StatusCode::OK, &rows))
}

/// A service bound to a local address, stoppable from the owner.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: tokio::sync::oneshot::Sender<()>,
    handle: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.handle
            .await
            .map_err(|e| std::io::Error::other(e.to_string()))?
    }
}

/// Opens the store at `root` and serves on `addr` in a background task.
pub async fn start(root: impl Into<PathBuf>, addr: SocketAddr) -> std::io::Result<RunningService> {
    let state = AppState::open(root).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(state);
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        shutdown: tx,
        handle,
    })
}

/// Serves until Ctrl-C.
pub async fn run(root: impl Into<PathBuf>, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(root).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "martlens service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
