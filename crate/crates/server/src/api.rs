//! HTTP routes.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use council_core::campaign::ModelMetadata;
use council_core::glyph::{map_features, render_svg};
use council_core::mnist::{GrayImage, COLS, PIXELS, ROWS};
use council_core::nn::images_to_matrix;
use council_core::rashomon::{group_by_label, PredictionMatrix, RashomonError, RashomonSet, Vote};

use crate::feedback::{FeedbackRecord, SampleRef};
use crate::state::AppState;

pub const DEFAULT_LIMIT: usize = 20;
pub const MAX_LIMIT: usize = 200;

pub type SharedState = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<RashomonError> for ApiError {
    fn from(e: RashomonError) -> Self {
        match e {
            RashomonError::Epsilon(_) | RashomonError::Floor(_) => ApiError::bad_request(e.to_string()),
            RashomonError::SampleIndex { .. } => ApiError::not_found(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/models", get(models))
        .route("/api/models/{id}", get(model))
        .route("/api/models/{id}/glyph.svg", get(glyph))
        .route("/api/rashomon", get(rashomon))
        .route("/api/samples", get(samples))
        .route("/api/samples/{index}/groups", get(sample_groups))
        .route("/api/predict", post(predict))
        .route("/api/feedback", post(post_feedback).get(list_feedback))
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
pub struct SetQuery {
    epsilon: Option<f64>,
    floor: Option<f64>,
}

impl SetQuery {
    fn resolve(&self, state: &AppState) -> ApiResult<RashomonSet> {
        Ok(state.rashomon(self.epsilon.unwrap_or(state.epsilon), self.floor.unwrap_or(state.floor))?)
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn models(State(state): State<SharedState>) -> Json<Vec<ModelMetadata>> {
    Json(state.registry.metadata().cloned().collect())
}

fn find_model<'a>(state: &'a AppState, id: &str) -> ApiResult<&'a ModelMetadata> {
    state
        .registry
        .get(id)
        .map(|e| &e.metadata)
        .ok_or_else(|| ApiError::not_found(format!("unknown model '{id}'")))
}

async fn model(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<ModelMetadata>> {
    Ok(Json(find_model(&state, &id)?.clone()))
}

#[derive(Debug, Deserialize)]
struct GlyphQuery {
    confidence: Option<f64>,
}

async fn glyph(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<GlyphQuery>,
) -> ApiResult<Response> {
    let meta = find_model(&state, &id)?;
    let features = map_features(&meta.config, q.confidence).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], render_svg(&features)).into_response())
}

#[derive(Debug, Serialize)]
struct RashomonView {
    members: Vec<String>,
    epsilon: f64,
    floor: f64,
    reference_accuracy: f64,
    threshold: f64,
}

impl From<RashomonSet> for RashomonView {
    fn from(s: RashomonSet) -> Self {
        RashomonView { threshold: s.threshold(), members: s.members, epsilon: s.epsilon, floor: s.floor, reference_accuracy: s.reference_accuracy }
    }
}

async fn rashomon(State(state): State<SharedState>, Query(q): Query<SetQuery>) -> ApiResult<Json<RashomonView>> {
    Ok(Json(q.resolve(&state)?.into()))
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SampleView {
    index: usize,
    label: u8,
    png: String,
    pixels: Vec<u8>,
}

#[derive(Debug, Serialize)]
struct SamplePage {
    total: usize,
    offset: usize,
    limit: usize,
    samples: Vec<SampleView>,
}

/// Encodes a 28x28 8-bit grayscale PNG.
pub fn encode_png(image: &GrayImage) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, COLS as u32, ROWS as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(image.pixels())?;
        writer.finish()?;
    }
    Ok(out)
}

async fn samples(State(state): State<SharedState>, Query(q): Query<PageQuery>) -> ApiResult<Json<SamplePage>> {
    let total = state.test.len();
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_LIMIT);
    if limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("limit above {MAX_LIMIT}")));
    }
    let end = offset.saturating_add(limit).min(total);
    let mut out = Vec::new();
    for index in offset.min(total)..end {
        let image = &state.test.images[index];
        let png = encode_png(image).map_err(|e| ApiError::internal(e.to_string()))?;
        out.push(SampleView { index, label: state.test.labels[index], png: B64.encode(png), pixels: image.pixels().to_vec() });
    }
    Ok(Json(SamplePage { total, offset, limit, samples: out }))
}

#[derive(Debug, Serialize)]
struct GroupsView {
    sample_index: usize,
    label: u8,
    epsilon: f64,
    floor: f64,
    members: usize,
    groups: BTreeMap<u8, Vec<Vote>>,
}

async fn sample_groups(
    State(state): State<SharedState>,
    Path(index): Path<usize>,
    Query(q): Query<SetQuery>,
) -> ApiResult<Json<GroupsView>> {
    if index >= state.test.len() {
        return Err(ApiError::not_found(format!("sample {index} out of range ({} samples)", state.test.len())));
    }
    let set = q.resolve(&state)?;
    let grouping = group_by_label(&state.matrix, index, &set)?;
    Ok(Json(GroupsView {
        sample_index: index,
        label: state.test.labels[index],
        epsilon: set.epsilon,
        floor: set.floor,
        members: set.len(),
        groups: grouping.groups,
    }))
}

#[derive(Debug, Deserialize)]
struct PredictBody {
    image: String,
}

#[derive(Debug, Serialize)]
struct MemberPrediction {
    model_id: String,
    label: u8,
    confidence: f32,
}

#[derive(Debug, Serialize)]
struct PredictView {
    epsilon: f64,
    floor: f64,
    predictions: Vec<MemberPrediction>,
    groups: BTreeMap<u8, Vec<Vote>>,
}

/// Accepts `{"image": "<base64>"}` or the bare base64 text.
fn decode_image(body: &[u8]) -> ApiResult<GrayImage> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?.trim();
    let encoded = if text.starts_with('{') {
        serde_json::from_str::<PredictBody>(text).map_err(|e| ApiError::bad_request(e.to_string()))?.image
    } else {
        text.to_owned()
    };
    let bytes = B64.decode(encoded.trim()).map_err(|e| ApiError::bad_request(format!("invalid base64: {e}")))?;
    GrayImage::from_slice(&bytes).ok_or_else(|| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("image must be {PIXELS} bytes, got {}", bytes.len()))
    })
}

async fn predict(State(state): State<SharedState>, Query(q): Query<SetQuery>, body: Bytes) -> ApiResult<Json<PredictView>> {
    let image = decode_image(&body)?;
    let set = q.resolve(&state)?;
    let inputs = images_to_matrix(std::slice::from_ref(&image));
    let mut predictions = Vec::with_capacity(set.len());
    for id in &set.members {
        let net = state.models.get(id).ok_or_else(|| ApiError::internal(format!("model '{id}' not resident")))?;
        let p = net.predict(inputs.view()).map_err(|e| ApiError::internal(e.to_string()))?[0];
        predictions.push(MemberPrediction { model_id: id.clone(), label: p.label, confidence: p.confidence });
    }
    let single = PredictionMatrix::new(
        set.members.clone(),
        1,
        predictions.iter().map(|p| p.label).collect(),
        predictions.iter().map(|p| p.confidence).collect(),
    )?;
    let groups = group_by_label(&single, 0, &set)?.groups;
    Ok(Json(PredictView { epsilon: set.epsilon, floor: set.floor, predictions, groups }))
}

async fn post_feedback(State(state): State<SharedState>, body: Bytes) -> ApiResult<(StatusCode, Json<FeedbackRecord>)> {
    let mut record: FeedbackRecord =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("malformed feedback: {e}")))?;
    find_model(&state, &record.model_id)?;
    match &record.sample_id {
        SampleRef::Index(i) if *i >= state.test.len() => return Err(ApiError::not_found(format!("sample {i} out of range"))),
        SampleRef::Drawn(s) if s != "drawn" => {
            return Err(ApiError::bad_request("sample_id must be a test index or \"drawn\""))
        }
        _ => {}
    }
    match &record.timestamp {
        Some(ts) if chrono::DateTime::parse_from_rfc3339(ts).is_err() => {
            return Err(ApiError::bad_request("timestamp is not ISO-8601"))
        }
        Some(_) => {}
        None => record.timestamp = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
    }
    state.feedback.append(&record).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_feedback(State(state): State<SharedState>) -> ApiResult<Json<Vec<FeedbackRecord>>> {
    Ok(Json(state.feedback.records().map_err(|e| ApiError::internal(e.to_string()))?))
}
