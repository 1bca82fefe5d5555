//! HTTP API over a loaded index.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use partpyr_core::descriptor::feature_len;
use partpyr_core::engine::{EngineError, QueryEngine, QueryRequest};
use partpyr_core::index_store::{load_index, read_documents};
use partpyr_core::pyramid::{build_layout, Scheme};
use partpyr_core::sketch_model::SketchDocument;

use crate::ServeArgs;

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn engine_error(e: EngineError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    error(status, e)
}

async fn health(State(engine): State<Arc<QueryEngine>>) -> Response {
    let index = engine.index();
    Json(json!({
        "status": "ok",
        "records": index.records.len(),
        "models": index.models().len(),
        "scheme": index.layout.scheme,
        "variant": index.variant,
        "fingerprint": index.fingerprint,
    }))
    .into_response()
}

async fn schemes(State(engine): State<Arc<QueryEngine>>) -> Response {
    let index = engine.index();
    let orientations = index.config.gabor.orientations.len();
    let canvas = index.config.canvas_side;
    let list: Vec<_> = Scheme::STANDARD
        .iter()
        .filter_map(|s| {
            let layout = build_layout(s, canvas).ok()?;
            Some(json!({
                "scheme": s,
                "regions": layout.len(),
                "feature_len": feature_len(&layout, orientations),
            }))
        })
        .collect();
    Json(json!({ "active": index.layout.scheme, "schemes": list })).into_response()
}

async fn query(State(engine): State<Arc<QueryEngine>>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    match tokio::task::spawn_blocking(move || engine.query(&req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => engine_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn view(State(engine): State<Arc<QueryEngine>>, UrlPath((model, view)): UrlPath<(String, String)>) -> Response {
    let Ok(view_id) = view.parse::<u32>() else {
        return error(StatusCode::BAD_REQUEST, format!("view id `{view}` is not a number"));
    };
    match engine.view(&model, view_id) {
        Ok(doc) => Json::<&SketchDocument>(doc).into_response(),
        Err(e) => engine_error(e),
    }
}

/// Routes with permissive CORS.
pub fn router(engine: Arc<QueryEngine>) -> Router {
    router_with_origins(engine, &[]).expect("no origins to parse")
}

/// Routes allowing the given browser origins, or any origin when empty.
pub fn router_with_origins(engine: Arc<QueryEngine>, origins: &[String]) -> Result<Router> {
    let cors = CorsLayer::new()
        .allow_methods(Any)
        .allow_headers([header::CONTENT_TYPE]);
    let cors = if origins.is_empty() {
        cors.allow_origin(Any)
    } else {
        let list = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).with_context(|| format!("origin `{o}`")))
            .collect::<Result<Vec<_>>>()?;
        cors.allow_origin(list)
    };
    Ok(Router::new()
        .route("/api/health", get(health))
        .route("/api/schemes", get(schemes))
        .route("/api/query", post(query))
        .route("/api/models/{id}/views/{view}", get(view))
        .layer(cors)
        .with_state(engine))
}

pub fn load_engine(args: &ServeArgs) -> Result<QueryEngine> {
    let index = load_index(&args.index).with_context(|| format!("loading index {}", args.index.display()))?;
    let mut engine = QueryEngine::new(index)?;
    if let Some(path) = &args.views {
        let docs: Vec<SketchDocument> = read_documents(path).with_context(|| format!("reading {}", path.display()))?;
        engine = engine.with_views(docs);
    }
    Ok(engine)
}

pub fn serve_blocking(args: &ServeArgs) -> Result<()> {
    let engine = Arc::new(load_engine(args)?);
    let app = router_with_origins(engine, &args.cors_origins)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("address {}:{}", args.host, args.port))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
