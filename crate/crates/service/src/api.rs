//! HTTP/JSON API under `/api/v1`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use vocabsize_core::cat::{CatError, Presentation, SessionState, Stage};
use vocabsize_core::Answer;

use crate::store::{Store, StoreError};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub data_dir: PathBuf,
    pub bank_path: Option<PathBuf>,
    pub session: vocabsize_core::SessionConfig,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
}

/// An error response: status plus a JSON body with `error` and, where it
/// helps the client resynchronise, the session `state`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({ "error": message.into() }) }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = json!(value);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl ApiError {
    fn from_store(e: StoreError, store: &Store, id: &str) -> Self {
        let state = || store.status(id).ok().map(|s| s.state);
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, e.to_string()),
            StoreError::Unavailable(ref d) => {
                let d = d.clone();
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e.to_string()).with("deficiencies", d)
            }
            StoreError::Invalid(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            StoreError::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            StoreError::Cat(c) => match c {
                CatError::WrongState { state, .. } => {
                    ApiError::new(StatusCode::CONFLICT, c.to_string()).with("state", state)
                }
                CatError::DuplicateAnswer(_) => ApiError::new(StatusCode::CONFLICT, c.to_string()).with("state", state()),
                CatError::StageMismatch(_) | CatError::InvalidAnswer(_) | CatError::UnknownStimulus(_) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, c.to_string()).with("state", state())
                }
                CatError::Ineligible(ref d) => {
                    let d: Vec<String> = d.iter().map(ToString::to_string).collect();
                    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, c.to_string()).with("deficiencies", d)
                }
                CatError::BankExhausted(_) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, c.to_string()),
                other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
            },
        }
    }
}

type Shared = Arc<Store>;

/// Runs a blocking store call off the async executor.
async fn blocking<T: Send + 'static>(
    store: &Shared,
    id: String,
    f: impl FnOnce(&Store, &str) -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store, &id).map_err(|e| ApiError::from_store(e, &store, &id)))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("invalid body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    seed: Option<u64>,
}

async fn create(State(store): State<Shared>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let body: CreateBody = if body.iter().all(u8::is_ascii_whitespace) {
        CreateBody::default()
    } else {
        parse_body(&body)?
    };
    let status = blocking(&store, String::new(), move |s, _| s.create(body.seed)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": status.session_id, "total_items": status.total_items })),
    ))
}

/// The client's view of a prompt. The stimulus kind is withheld so that
/// pseudowords cannot be told apart from real words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextItem {
    pub item_id: String,
    pub surface: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub position: usize,
    pub total_items: usize,
}

impl From<Presentation> for NextItem {
    fn from(p: Presentation) -> Self {
        NextItem {
            item_id: p.item_id,
            surface: p.surface,
            stage: p.stage,
            options: p.options,
            position: p.position,
            total_items: p.total_items,
        }
    }
}

async fn next(State(store): State<Shared>, Path(id): Path<String>) -> Result<Json<NextItem>, ApiError> {
    Ok(Json(blocking(&store, id, |s, id| s.next(id)).await?.into()))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BinaryAnswer {
    Know,
    DontKnow,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    item_id: String,
    answer: Option<BinaryAnswer>,
    choice_index: Option<i64>,
    #[serde(default)]
    latency_ms: u64,
}

impl AnswerBody {
    fn to_answer(&self) -> Result<Answer, ApiError> {
        let invalid = |m: &str| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
        match (&self.answer, self.choice_index) {
            (Some(BinaryAnswer::Know), None) => Ok(Answer::Know),
            (Some(BinaryAnswer::DontKnow), None) => Ok(Answer::DontKnow),
            (None, Some(i)) if (0..=3).contains(&i) => Ok(Answer::Choice(i as u8)),
            (None, Some(i)) => Err(invalid(&format!("choice_index must be 0..=3, got {i}"))),
            _ => Err(invalid("exactly one of `answer` or `choice_index` is required")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerAck {
    pub accepted: bool,
    pub warning: bool,
    pub state: SessionState,
}

async fn answer(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AnswerAck>, ApiError> {
    let body: AnswerBody = parse_body(&body)?;
    let answer = body.to_answer()?;
    let out = blocking(&store, id, move |s, id| s.answer(id, &body.item_id, answer, body.latency_ms)).await?;
    Ok(Json(AnswerAck { accepted: true, warning: out.warning, state: out.state }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemographicsBody {
    age: i64,
    native: bool,
    honest: bool,
}

async fn demographics(
    State(store): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let d: DemographicsBody = parse_body(&body)?;
    blocking(&store, id, move |s, id| s.demographics(id, d.age, d.native, d.honest)).await?;
    Ok(Json(json!({ "ok": true })))
}

async fn result(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(&store, id, |s, id| s.result(id)).await?).into_response())
}

async fn status(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(&store, id, |s, id| s.status(id)).await?).into_response())
}

async fn stats(State(store): State<Shared>) -> Response {
    Json(store.stats()).into_response()
}

async fn healthz(State(store): State<Shared>) -> Response {
    let bank_ready = matches!(store.bank(), crate::store::BankStatus::Ready(_));
    Json(json!({ "status": "ok", "bank_ready": bank_ready })).into_response()
}

fn cors(origins: &[String]) -> Result<CorsLayer, String> {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.is_empty() {
        return Ok(layer.allow_origin(Any));
    }
    let parsed = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|e| format!("bad CORS origin {o:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(parsed))
}

/// The application router. `cors_origins` empty allows any origin.
pub fn router(store: Arc<Store>, cors_origins: &[String]) -> Result<Router, String> {
    Ok(Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/sessions", post(create))
        .route("/api/v1/sessions/{id}", get(status))
        .route("/api/v1/sessions/{id}/next", get(next))
        .route("/api/v1/sessions/{id}/answers", post(answer))
        .route("/api/v1/sessions/{id}/demographics", post(demographics))
        .route("/api/v1/sessions/{id}/result", get(result))
        .route("/api/v1/stats", get(stats))
        .layer(cors(cors_origins)?)
        .with_state(store))
}

/// Binds and serves until interrupted. Prints `listening on <addr>` once the
/// socket is bound.
pub async fn serve(store: Arc<Store>, addr: SocketAddr, cors_origins: &[String]) -> std::io::Result<()> {
    let app = router(store, cors_origins).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on {}", listener.local_addr()?);
    use std::io::Write as _;
    std::io::stdout().flush()?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
