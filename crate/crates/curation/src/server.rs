use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tlr_core::mapping::{PriorMap, TLCandidate};
use tokio::sync::RwLock;
use tower_http::cors::CorsLayer;

use crate::error::CurationError;
use crate::overlay::render_overlay;
use crate::session::{CurationSession, Decision};

/// Optional request header naming the person making a change.
const ACTOR_HEADER: &str = "x-curator";

/// Shared session. Reads run concurrently; mutations take the write lock,
/// so they are applied one at a time and every response sees a consistent
/// snapshot.
#[derive(Clone)]
pub struct AppState {
    session: Arc<RwLock<CurationSession>>,
}

impl AppState {
    pub fn new(session: CurationSession) -> Self {
        Self {
            session: Arc::new(RwLock::new(session)),
        }
    }

    pub fn session(&self) -> &Arc<RwLock<CurationSession>> {
        &self.session
    }
}

struct ApiError(CurationError);

impl From<CurationError> for ApiError {
    fn from(e: CurationError) -> Self {
        ApiError(e)
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            CurationError::UnknownCandidate(_)
            | CurationError::FrameNotFound(_)
            | CurationError::NotFound(_) => StatusCode::NOT_FOUND,
            CurationError::InvalidGroup(_) | CurationError::PointIndexOutOfRange { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            CurationError::PendingRemain(_) | CurationError::SessionLocked(_) => {
                StatusCode::CONFLICT
            }
            CurationError::BadRequest(_) => StatusCode::BAD_REQUEST,
            CurationError::Journal { .. } | CurationError::Mapping(_) | CurationError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = ErrorBody {
            error: self.0.code(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError(CurationError::BadRequest(e.body_text())))
}

fn actor(headers: &HeaderMap) -> Option<String> {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
}

#[derive(Serialize)]
struct CandidateView<'a> {
    #[serde(flatten)]
    candidate: &'a TLCandidate,
    /// Overlay URL of the frame that best shows the candidate.
    overlay: Option<String>,
}

fn view<'a>(s: &CurationSession, c: &'a TLCandidate) -> CandidateView<'a> {
    CandidateView {
        candidate: c,
        overlay: s
            .overlay_frame_t(c)
            .map(|t| format!("/api/v1/frames/{t}/overlay?candidate={}", c.id)),
    }
}

#[derive(Serialize)]
struct CandidateList<'a> {
    route_id: &'a str,
    pending: usize,
    candidates: Vec<CandidateView<'a>>,
}

async fn list(State(st): State<AppState>) -> Response {
    let s = st.session.read().await;
    Json(CandidateList {
        route_id: s.route_id(),
        pending: s.pending(),
        candidates: s.candidates().into_iter().map(|c| view(&s, c)).collect(),
    })
    .into_response()
}

async fn one(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = st.session.read().await;
    let c = s.candidate(&id)?;
    Ok(Json(view(&s, c)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: Decision,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    relevant_for: BTreeSet<String>,
}

async fn decide(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> ApiResult<Response> {
    let b = json_body(body)?;
    let mut s = st.session.write().await;
    s.decide(
        actor(&headers).as_deref(),
        &id,
        b.decision,
        b.group,
        b.relevant_for,
    )?;
    let c = s.candidate(&id)?;
    Ok(Json(view(&s, c)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualBody {
    t: f64,
    point_index: usize,
}

async fn manual(
    State(st): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<ManualBody>, JsonRejection>,
) -> ApiResult<Response> {
    let b = json_body(body)?;
    let mut s = st.session.write().await;
    let id = s
        .manual_candidate(actor(&headers).as_deref(), b.t, b.point_index)?
        .id
        .clone();
    let c = s.candidate(&id)?;
    Ok((StatusCode::CREATED, Json(view(&s, c))).into_response())
}

#[derive(Deserialize)]
struct OverlayQuery {
    candidate: Option<String>,
}

async fn overlay(
    State(st): State<AppState>,
    Path(t): Path<String>,
    Query(q): Query<OverlayQuery>,
) -> ApiResult<Response> {
    let s = st.session.read().await;
    let t: f64 = t
        .parse()
        .map_err(|_| CurationError::FrameNotFound(t.clone()))?;
    let frame = s.frame_at(t)?;
    if let Some(id) = &q.candidate {
        s.candidate(id)?;
    }
    let png = render_overlay(frame, &s.candidates(), s.camera(), q.candidate.as_deref());
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SaveBody {
    #[serde(default)]
    force: bool,
}

#[derive(Serialize)]
struct SaveResponse {
    path: Option<String>,
    dropped: usize,
    lights: usize,
    groups: usize,
    map: PriorMap,
}

async fn save(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    // an empty body means {"force": false}
    let b: SaveBody = if body.iter().all(u8::is_ascii_whitespace) {
        SaveBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| CurationError::BadRequest(e.to_string()))?
    };
    let mut s = st.session.write().await;
    let out = s.save(actor(&headers).as_deref(), b.force)?;
    Ok(Json(SaveResponse {
        path: out.path.map(|p| p.display().to_string()),
        dropped: out.dropped,
        lights: out.map.lights.len(),
        groups: out.map.groups.len(),
        map: out.map,
    })
    .into_response())
}

async fn draft(State(st): State<AppState>) -> Response {
    Json(st.session.read().await.draft_map()).into_response()
}

async fn not_found() -> ApiError {
    ApiError(CurationError::NotFound("no such endpoint".into()))
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/candidates", get(list))
        .route("/candidates/manual", post(manual))
        .route("/candidates/{id}", get(one))
        .route("/candidates/{id}/decision", post(decide))
        .route("/frames/{t}/overlay", get(overlay))
        .route("/save", post(save))
        .route("/map", get(draft));
    Router::new()
        .nest("/api/v1", api)
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `listener` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
