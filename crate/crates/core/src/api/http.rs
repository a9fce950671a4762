use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use super::views::{self, to_body, BoardQuery, IngestResponse, Span};
use super::{ApiError, ErrorCode};
use crate::corpus::{CorpusSnapshot, CorpusStore};
use crate::effectiveness::EffectivenessModel;
use crate::factors::FactorId;
use crate::feature::load_bundle;
use crate::recommend::RecommendationQuery;
use crate::summary::GmmOptions;

/// Largest accepted bundle upload.
pub const MAX_BUNDLE_BYTES: usize = 512 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<CorpusStore>,
    pub model: Arc<EffectivenessModel>,
    pub gmm: GmmOptions,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json_response(status, to_body(&self))
    }
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Runs engine work off the async executor.
async fn blocking(f: impl FnOnce() -> Result<Vec<u8>, ApiError> + Send + 'static) -> Response {
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(body)) => json_response(StatusCode::OK, body),
        Ok(Err(e)) => e.into_response(),
        Err(e) => views::internal(format!("request task failed: {e}")).into_response(),
    }
}

/// Snapshot per request, then a pure computation on it.
async fn with_snapshot(
    state: AppState,
    f: impl FnOnce(&AppState, &CorpusSnapshot) -> Result<Vec<u8>, ApiError> + Send + 'static,
) -> Response {
    blocking(move || {
        let snap = state.store.snapshot()?;
        f(&state, &snap)
    })
    .await
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t).map_err(|e| ApiError::invalid(e.body_text()))
}

#[derive(Debug, Default, Deserialize)]
struct SpanQuery {
    start: Option<f64>,
    end: Option<f64>,
    factors: Option<String>,
}

impl SpanQuery {
    fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end,
        }
    }

    fn factors(&self) -> Result<Vec<FactorId>, ApiError> {
        views::parse_factor_list(self.factors.as_deref().unwrap_or(""))
    }
}

#[derive(Debug, Deserialize)]
struct OverlayQuery {
    t: f64,
    interval: Option<f64>,
    n: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct IngestQuery {
    force: Option<String>,
}

async fn speeches(State(s): State<AppState>) -> Response {
    with_snapshot(s, |_, snap| Ok(to_body(views::list_speeches(snap)))).await
}

async fn factors(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<SpanQuery>, QueryRejection>,
) -> Response {
    let q = match query(q) {
        Ok(q) => q,
        Err(e) => return e.into_response(),
    };
    with_snapshot(s, move |s, snap| Ok(to_body(views::factor_report(snap, &s.model, &id, q.span())?))).await
}

async fn slices(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<SpanQuery>, QueryRejection>,
) -> Response {
    let q = match query(q) {
        Ok(q) => q,
        Err(e) => return e.into_response(),
    };
    with_snapshot(s, move |s, snap| {
        let f = q.factors()?;
        Ok(to_body(views::slices(snap, &s.model, &id, q.span(), &f)?))
    })
    .await
}

async fn twin(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<SpanQuery>, QueryRejection>,
) -> Response {
    let q = match query(q) {
        Ok(q) => q,
        Err(e) => return e.into_response(),
    };
    with_snapshot(s, move |s, snap| {
        let f = q.factors()?;
        Ok(to_body(views::twin(snap, &s.model, &s.gmm, &id, q.span(), &f)?))
    })
    .await
}

async fn overlay(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<OverlayQuery>, QueryRejection>,
) -> Response {
    let q = match query(q) {
        Ok(q) => q,
        Err(e) => return e.into_response(),
    };
    with_snapshot(s, move |_, snap| Ok(to_body(views::overlay(snap, &id, q.t, q.interval, q.n)?))).await
}

async fn compare(State(s): State<AppState>, Path((a, b)): Path<(String, String)>) -> Response {
    with_snapshot(s, move |_, snap| Ok(to_body(views::compare(snap, &a, &b)?))).await
}

async fn board(
    State(s): State<AppState>,
    Path(factor): Path<String>,
    q: Result<Query<BoardQuery>, QueryRejection>,
) -> Response {
    let q = match query(q) {
        Ok(q) => q,
        Err(e) => return e.into_response(),
    };
    let factor: FactorId = match factor.parse() {
        Ok(f) => f,
        Err(e) => return ApiError::from(e).into_response(),
    };
    with_snapshot(s, move |s, snap| Ok(to_body(views::factor_board(snap, &s.model, factor, &q)?))).await
}

async fn recommend(State(s): State<AppState>, body: Result<Json<RecommendationQuery>, JsonRejection>) -> Response {
    let query = match body {
        Ok(Json(q)) => q,
        Err(e) => return ApiError::new(ErrorCode::SchemaError, e.body_text()).into_response(),
    };
    with_snapshot(s, move |s, snap| Ok(to_body(views::recommend_with_twins(snap, &s.gmm, &query)?))).await
}

async fn model(State(s): State<AppState>) -> Response {
    json_response(StatusCode::OK, s.model.to_json().into_bytes())
}

async fn encodings() -> Response {
    json_response(StatusCode::OK, to_body(views::encodings()))
}

async fn ingest(
    State(s): State<AppState>,
    q: Result<Query<IngestQuery>, QueryRejection>,
    body: Bytes,
) -> Response {
    let force = match query(q) {
        Ok(q) => q.force.is_some_and(|v| !matches!(v.as_str(), "false" | "0")),
        Err(e) => return e.into_response(),
    };
    blocking(move || {
        let bundle = load_bundle(&body)?;
        let out = s.store.ingest(bundle, force)?;
        Ok(to_body(IngestResponse {
            id: out.id,
            replaced: out.replaced,
        }))
    })
    .await
}

async fn unknown_route() -> Response {
    ApiError::not_found("route").into_response()
}

/// The `/api` routes.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/speeches", get(speeches))
        .route("/api/speeches/{id}/factors", get(factors))
        .route("/api/speeches/{id}/slices", get(slices))
        .route("/api/speeches/{id}/twin", get(twin))
        .route("/api/speeches/{id}/overlay", get(overlay))
        .route("/api/speeches/{id}/compare/{other}", get(compare))
        .route("/api/board/{factor}", get(board))
        .route("/api/recommend", post(recommend))
        .route("/api/model", get(model))
        .route("/api/encodings", get(encodings))
        .route("/api/ingest", post(ingest).layer(DefaultBodyLimit::max(MAX_BUNDLE_BYTES)))
        .route("/api", get(unknown_route))
        .route("/api/{*rest}", get(unknown_route).post(unknown_route))
        .with_state(state)
}

/// API routes plus an optional static UI build served at `/`.
pub fn app(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = router(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(unknown_route),
    }
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
