use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use super::{AppState, ServiceConfig, StartupError};
use crate::corpus::VerseId;
use crate::embedding::EmbedError;
use crate::rag::{daily_verse, QueryRequest, RagError, VersePresentation};
use crate::vector_index::IndexError;

pub const CORPUS_HASH_HEADER: &str = "x-pragya-corpus-hash";
const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<RagError> for ApiError {
    fn from(err: RagError) -> Self {
        let message = err.to_string();
        let (status, code) = match &err {
            RagError::EmptyQuery | RagError::Embed(EmbedError::EmptyText) => {
                (StatusCode::BAD_REQUEST, "empty_query")
            }
            RagError::InvalidK(_) | RagError::Index(IndexError::InvalidK) => {
                (StatusCode::BAD_REQUEST, "invalid_k")
            }
            RagError::Embed(EmbedError::ZeroVector) => (StatusCode::BAD_REQUEST, "no_query_terms"),
            RagError::Embed(EmbedError::RemoteUnavailable(_)) => {
                (StatusCode::SERVICE_UNAVAILABLE, "embedder_unavailable")
            }
            RagError::Embed(EmbedError::RemoteMalformed(_)) => {
                (StatusCode::BAD_GATEWAY, "embedder_malformed")
            }
            RagError::Index(IndexError::DimensionMismatch { .. }) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                "index_dimension_mismatch",
            ),
            RagError::IndexCorpusMismatch(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "index_corpus_mismatch")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %err, "query failed");
        }
        Self::new(status, code, message)
    }
}

type Shared = Arc<AppState>;

/// Builds the HTTP API over `state`.
pub fn router(state: AppState) -> Router {
    let cors = match state.config.cors_allowed_origin.as_str() {
        "*" => CorsLayer::new().allow_origin(Any),
        origin => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => {
                tracing::warn!(origin, "invalid CORS origin, allowing none");
                CorsLayer::new()
            }
        },
    }
    .allow_methods(Any)
    .allow_headers(Any)
    .expose_headers([HeaderName::from_static(CORPUS_HASH_HEADER)]);

    let hash = HeaderValue::from_str(&state.build_info.corpus_hash).expect("hex is a valid header");
    Router::new()
        .route("/health", get(health))
        .route("/api/query", post(query))
        .route("/api/verses", get(list_verses))
        .route("/api/verses/:id", get(get_verse))
        .route("/api/tags", get(tags))
        .route("/api/daily", get(daily))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(axum::middleware::map_response(move |mut res: Response| {
            let hash = hash.clone();
            async move {
                res.headers_mut().insert(CORPUS_HASH_HEADER, hash);
                res
            }
        }))
        .layer(cors)
        .with_state(Arc::new(state))
}

async fn health(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "verses": state.pipeline.corpus.len(),
        "corpus_hash": state.build_info.corpus_hash,
        "index_built_at": state.build_info.built_at,
    }))
}

async fn query(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: QueryRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    req.validate()?;
    let response = tokio::task::spawn_blocking(move || state.pipeline.answer_query(&req))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok(Json(response).into_response())
}

#[derive(Debug, Deserialize)]
struct TagFilter {
    tag: Option<String>,
}

async fn list_verses(
    State(state): State<Shared>,
    Query(filter): Query<TagFilter>,
) -> Json<Vec<VersePresentation>> {
    let corpus = &state.pipeline.corpus;
    let verses = match filter.tag {
        Some(tag) => corpus.verses_by_tag(&tag.trim().to_lowercase()),
        None => corpus.verses().iter().collect(),
    };
    Json(
        verses
            .into_iter()
            .map(VersePresentation::from_verse)
            .collect(),
    )
}

async fn get_verse(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<VersePresentation>, ApiError> {
    let id: u32 = id.parse().map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_id",
            format!("`{id}` is not a verse id"),
        )
    })?;
    state
        .pipeline
        .corpus
        .get(VerseId(id))
        .map(|v| Json(VersePresentation::from_verse(v)))
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "verse_not_found",
                format!("no verse with id {id}"),
            )
        })
}

#[derive(Debug, Serialize)]
struct TagCount<'a> {
    tag: &'a str,
    count: usize,
}

async fn tags(State(state): State<Shared>) -> Response {
    let counts: Vec<TagCount<'_>> = state
        .pipeline
        .corpus
        .tag_counts()
        .iter()
        .map(|(tag, &count)| TagCount { tag, count })
        .collect();
    Json(counts).into_response()
}

#[derive(Debug, Deserialize)]
struct DailyParams {
    date: Option<String>,
}

async fn daily(
    State(state): State<Shared>,
    Query(params): Query<DailyParams>,
) -> Result<Json<VersePresentation>, ApiError> {
    let date = match params.date {
        Some(d) => NaiveDate::parse_from_str(&d, "%Y-%m-%d").map_err(|_| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_date",
                "expected YYYY-MM-DD",
            )
        })?,
        None => chrono::Utc::now().date_naive(),
    };
    Ok(Json(daily_verse(&state.pipeline.corpus, date)?))
}

/// Serves `state` on `listener` until `shutdown` resolves, then drains
/// in-flight requests for at most five seconds.
pub async fn run_server(
    state: AppState,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (tx, mut rx) = tokio::sync::watch::channel(false);
    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async move {
        shutdown.await;
        let _ = tx.send(true);
    });
    let deadline = async move {
        let _ = rx.wait_for(|stopped| *stopped).await;
        tokio::time::sleep(SHUTDOWN_GRACE).await;
    };
    tokio::select! {
        result = server => result,
        () = deadline => {
            tracing::warn!("in-flight requests did not finish within the grace period");
            Ok(())
        }
    }
}

/// Starts the service and runs until SIGINT or SIGTERM.
pub async fn serve(config: ServiceConfig) -> Result<(), StartupError> {
    let port = config.port;
    let state = tokio::task::spawn_blocking(move || AppState::startup(config))
        .await
        .map_err(|e| StartupError::Server(std::io::Error::other(e)))??;
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| StartupError::Bind { port, source })?;
    tracing::info!(%addr, verses = state.pipeline.corpus.len(), "listening");
    run_server(state, listener, shutdown_signal()).await?;
    Ok(())
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
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {}
        () = term => {}
    }
    tracing::info!("shutdown signal received");
}
