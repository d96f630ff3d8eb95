//! HTTP routes over [`Service`]. Handlers run the blocking service calls
//! on the blocking pool and answer JSON, including errors.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::service::{parse_date, ImputeRequest, Service};

type Shared = Arc<Service>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/v1/grids", get(grids))
        .route("/v1/ci/{grid}/{date}", get(ci_historical))
        .route("/v1/forecasts/{grid}/{date}", get(ci_forecast))
        .route("/v1/accuracy/{grid}/{date}", get(accuracy))
        .route("/v1/impute", post(impute))
        .route("/v1/model", get(current_model).post(set_model))
        .fallback(|| async {
            error_response(
                &ApiError::InvalidRequest("no such endpoint".into()),
                StatusCode::NOT_FOUND,
            )
        })
        .with_state(service)
}

/// Serves until ctrl-c.
pub async fn serve(service: Shared, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn json_response(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn error_response(e: &ApiError, status: StatusCode) -> Response {
    json_response(
        status,
        serde_json::to_vec(&e.body()).expect("error body serializes"),
    )
}

fn api_error(e: ApiError) -> Response {
    let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    error_response(&e, status)
}

async fn blocking<T, F>(service: Shared, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Service) -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&service)).await {
        Ok(Ok(v)) => json_response(
            StatusCode::OK,
            serde_json::to_vec(&v).expect("payload serializes"),
        ),
        Ok(Err(e)) => api_error(e),
        Err(e) => api_error(ApiError::Internal(format!("handler failed: {e}"))),
    }
}

fn query_usize(q: &HashMap<String, String>, key: &str) -> Result<Option<usize>, ApiError> {
    q.get(key)
        .map(|v| {
            v.parse().map_err(|_| {
                ApiError::InvalidRequest(format!("`{key}` must be a non-negative integer"))
            })
        })
        .transpose()
}

fn query_bool(q: &HashMap<String, String>, key: &str) -> Result<bool, ApiError> {
    match q.get(key).map(|v| v.to_ascii_lowercase()) {
        None => Ok(false),
        Some(v) if matches!(v.as_str(), "true" | "1" | "yes") => Ok(true),
        Some(v) if matches!(v.as_str(), "false" | "0" | "no") => Ok(false),
        Some(v) => Err(ApiError::InvalidRequest(format!(
            "`{key}` must be a boolean, got `{v}`"
        ))),
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::InvalidRequest(format!("invalid JSON body: {e}")))
}

async fn grids(State(svc): State<Shared>) -> Response {
    blocking(svc, |s| Ok(s.grids())).await
}

async fn ci_historical(
    State(svc): State<Shared>,
    Path((grid, date)): Path<(String, String)>,
) -> Response {
    blocking(svc, move |s| s.ci_historical(&grid, parse_date(&date)?)).await
}

async fn ci_forecast(
    State(svc): State<Shared>,
    Path((grid, date)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    blocking(svc, move |s| {
        let horizon = query_usize(&q, "horizon")?;
        let pi = query_bool(&q, "pi")?;
        s.ci_forecast(&grid, parse_date(&date)?, horizon, pi, s.config().on_demand)
    })
    .await
}

async fn accuracy(
    State(svc): State<Shared>,
    Path((grid, date)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    blocking(svc, move |s| {
        s.accuracy(&grid, parse_date(&date)?, query_usize(&q, "horizon")?)
    })
    .await
}

async fn impute(State(svc): State<Shared>, body: Bytes) -> Response {
    blocking(svc, move |s| s.impute(&parse_body::<ImputeRequest>(&body)?)).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetModel {
    model: String,
    mode: String,
}

async fn current_model(State(svc): State<Shared>) -> Response {
    blocking(svc, |s| Ok(s.current_model())).await
}

async fn set_model(State(svc): State<Shared>, body: Bytes) -> Response {
    blocking(svc, move |s| {
        let req: SetModel = parse_body(&body)?;
        s.set_model(&req.model, &req.mode)
    })
    .await
}
