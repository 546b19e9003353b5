//! The `/v1` HTTP API over a swappable index snapshot.

use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sonotext_core::encoder::Embedding;
use sonotext_core::eval::{zero_shot_classify, zero_shot_detection_scores, LabelPromptSet};

use crate::artifacts::{clip_wav, Snapshot};
use crate::config::ServiceConfig;

pub const MAX_K: usize = 1000;
pub const DEFAULT_K: i64 = 10;

/// Characters left unescaped in the clip id part of an audio URL.
const CLIP_ID_SAFE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~').remove(b':');

pub struct AppState {
    pub config: ServiceConfig,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, snapshot: Option<Snapshot>) -> Self {
        AppState { config, snapshot: RwLock::new(snapshot.map(Arc::new)) }
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn publish(&self, snapshot: Snapshot) {
        *self.snapshot.write().expect("snapshot lock") = Some(Arc::new(snapshot));
    }

    fn loaded(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.snapshot()
            .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "index not loaded"))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/search", post(search))
        .route("/v1/classify", post(classify))
        .route("/v1/audio/{clip_id}", get(audio))
        .route("/v1/admin/reload", post(reload))
        .route("/v1/health", get(health))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{err:#}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

fn audio_url(clip_id: &str) -> String {
    format!("/v1/audio/{}", utf8_percent_encode(clip_id, CLIP_ID_SAFE))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SearchRequest {
    pub text: String,
    #[serde(default)]
    pub k: Option<i64>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchHit {
    pub clip_id: String,
    pub score: f64,
    pub caption: String,
    pub species_common: Option<String>,
    pub audio_url: String,
}

#[derive(Debug, Serialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
}

async fn search(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Json(req) = body?;
    if req.text.trim().is_empty() {
        return Err(ApiError::bad_request("text must not be empty"));
    }
    let k = req.k.unwrap_or(DEFAULT_K);
    if k < 1 {
        return Err(ApiError::bad_request("k must be >= 1"));
    }
    let k = (k as usize).min(MAX_K);
    let snapshot = state.loaded()?;
    let hits = tokio::task::spawn_blocking(move || snapshot.search(&req.text, k))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{e:#}")))?;
    Ok(Json(SearchResponse {
        results: hits
            .into_iter()
            .map(|h| SearchHit {
                audio_url: audio_url(&h.clip_id),
                clip_id: h.clip_id,
                score: h.score,
                caption: h.caption,
                species_common: h.species_common,
            })
            .collect(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClassifyRequest {
    #[serde(default)]
    pub clip_id: Option<String>,
    /// Base64-encoded WAV bytes.
    #[serde(default)]
    pub audio: Option<String>,
    pub labels: Vec<String>,
    /// Prompt template containing `{label}`; the bare label when absent.
    #[serde(default)]
    pub template: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct LabelScore {
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassifyResponse {
    pub scores: Vec<LabelScore>,
    pub argmax_label: String,
}

async fn classify(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Json<ClassifyResponse>, ApiError> {
    let Json(req) = body?;
    if req.labels.is_empty() || req.labels.iter().any(|l| l.trim().is_empty()) {
        return Err(ApiError::bad_request("labels must be a non-empty list of non-empty strings"));
    }
    let snapshot = state.loaded()?;
    let audio = match (req.clip_id, req.audio) {
        (Some(id), None) => {
            let (_, values) = snapshot
                .index
                .get(&id)
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown clipId {id:?}")))?;
            Embedding { values: values.to_vec(), normalized: true }
        }
        (None, Some(b64)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError::bad_request(format!("audio is not base64: {e}")))?;
            let snap = snapshot.clone();
            tokio::task::spawn_blocking(move || snap.embed_wav(&bytes))
                .await
                .map_err(ApiError::internal)?
                .map_err(|e| ApiError::bad_request(format!("audio: {e:#}")))?
        }
        _ => return Err(ApiError::bad_request("give exactly one of clipId or audio")),
    };
    let prompts = LabelPromptSet::embed(&req.labels, &snapshot.model, req.template.as_deref())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("labels: {e}")))?;
    let scores = zero_shot_detection_scores(&audio, &prompts).map_err(ApiError::internal)?;
    let best = zero_shot_classify(&audio, &prompts).map_err(ApiError::internal)?;
    Ok(Json(ClassifyResponse {
        argmax_label: req.labels[best].clone(),
        scores: req
            .labels
            .into_iter()
            .zip(scores)
            .map(|(label, score)| LabelScore { label, score })
            .collect(),
    }))
}

async fn audio(State(state): State<Arc<AppState>>, Path(clip_id): Path<String>) -> Result<Response, ApiError> {
    let snapshot = state.loaded()?;
    let meta = snapshot
        .index
        .get(&clip_id)
        .map(|(m, _)| m.clone())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown clipId {clip_id:?}")))?;
    let root = state.config.corpus_root.clone();
    let wav = tokio::task::spawn_blocking(move || clip_wav(&root, &meta))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], wav).into_response())
}

async fn reload(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Json<serde_json::Value>, ApiError> {
    if let Some(token) = &state.config.admin_token {
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "admin token required"));
        }
    }
    let (index, ckpt) = (state.config.index_path.clone(), state.config.checkpoint());
    let snapshot = tokio::task::spawn_blocking(move || Snapshot::load(&index, Some(&ckpt)))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    let entries = snapshot.index.len();
    state.publish(snapshot);
    log::info!("reloaded index with {entries} entries");
    Ok(Json(json!({ "status": "reloaded", "entries": entries })))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snapshot = state.snapshot();
    Json(json!({
        "status": "ok",
        "indexLoaded": snapshot.is_some(),
        "entries": snapshot.map_or(0, |s| s.index.len()),
        "deskDefaults": state.config.desk_defaults,
    }))
}
