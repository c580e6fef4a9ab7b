//! Exposes an in-process mock server over real HTTP.
//!
//! `/{host}/rest/of/path?q` is forwarded to the mock app mounted at `host`,
//! so a registry ingested with base URL `http://addr/{host}` reaches it.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use taskloom_core::registry::mock::MockServer;
use taskloom_core::registry::transport::HttpRequest;

async fn forward(State(server): State<Arc<MockServer>>, req: Request) -> Response {
    let method = req.method().as_str().to_string();
    let path_and_query = req.uri().path_and_query().map(|p| p.as_str().to_string()).unwrap_or_default();
    let body = match axum::body::to_bytes(req.into_body(), 1 << 20).await {
        Ok(b) => b,
        Err(e) => return (StatusCode::PAYLOAD_TOO_LARGE, e.to_string()).into_response(),
    };
    let body = if body.is_empty() {
        None
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => Some(v),
            Err(e) => return (StatusCode::BAD_REQUEST, format!("body is not JSON: {e}")).into_response(),
        }
    };
    let request = HttpRequest {
        method,
        url: format!("http:/{path_and_query}"),
        headers: Vec::new(),
        body,
    };
    let resp = server.handle(&request);
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], Bytes::from(resp.body)).into_response()
}

pub fn router(server: Arc<MockServer>) -> Router {
    Router::new().fallback(forward).with_state(server)
}
