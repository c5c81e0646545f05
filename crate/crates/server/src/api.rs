use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use pmdb_core::lexer::Position;
use pmdb_core::shell::{Operation, RuleInfo, Service, ServiceError, TablePayload, WeightQuery};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Error body: `{code, message, position?}`.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
}

impl ApiError {
    fn bad_request(message: impl ToString) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "invalid-request".into(), message: message.to_string(), position: None }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match e.code() {
            "unknown-session" | "unknown-rule" => StatusCode::NOT_FOUND,
            "duplicate-rule-name" => StatusCode::CONFLICT,
            _ => StatusCode::BAD_REQUEST,
        };
        Self { status, code: e.code().to_string(), message: e.to_string(), position: e.position() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        log::warn!("{} {}: {}", self.status.as_u16(), self.code, self.message);
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<Service>>;

/// Runs a service call off the async workers; table computations and loads
/// take blocking locks.
async fn blocking<T: Send + 'static>(
    svc: Arc<Service>,
    f: impl FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(move || f(&svc)).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal-error".into(),
            message: e.to_string(),
            position: None,
        }),
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/schema", get(schema))
        .route("/profiles/{profile}/rules", get(list_rules).post(add_rules))
        .route("/profiles/{profile}/rules/{name}", delete(drop_rule))
        .route("/profiles/{profile}/weights", get(weights))
        .route("/sessions/{id}/op", post(operation))
        .route("/sessions/{id}/table", get(table))
        .route("/sessions/{id}/history", get(history))
        .with_state(service)
}

#[derive(Debug, Default, Deserialize)]
struct NewSession {
    #[serde(default)]
    profile: Option<String>,
}

async fn create_session(State(svc): Shared, body: Option<Json<NewSession>>) -> (StatusCode, Json<Value>) {
    let profile = body.and_then(|Json(b)| b.profile).unwrap_or_else(|| "default".into());
    let id = svc.create_session(&profile);
    (StatusCode::CREATED, Json(json!({ "session_id": id, "profile": profile })))
}

async fn schema(State(svc): Shared) -> ApiResult<Json<Value>> {
    let c = svc.schema()?;
    serde_json::to_value(&*c).map(Json).map_err(ApiError::bad_request)
}

async fn list_rules(State(svc): Shared, Path(profile): Path<String>) -> Json<Vec<RuleInfo>> {
    Json(svc.rules(&profile))
}

#[derive(Debug, Deserialize)]
struct NewRules {
    source: String,
}

async fn add_rules(
    State(svc): Shared,
    Path(profile): Path<String>,
    body: Result<Json<NewRules>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(body) = body?;
    let names = blocking(svc, move |s| s.add_rules(&profile, &body.source)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "registered": names }))))
}

async fn drop_rule(State(svc): Shared, Path((profile, name)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let rule = blocking(svc, move |s| s.drop_rule(&profile, &name)).await?;
    Ok(Json(json!({ "dropped": rule.name })))
}

async fn weights(
    State(svc): Shared,
    Path(profile): Path<String>,
    query: Result<Query<WeightQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let Query(q) = query?;
    let wa = blocking(svc, move |s| s.weights(&profile, &q)).await?;
    serde_json::to_value(&wa).map(Json).map_err(ApiError::bad_request)
}

async fn operation(
    State(svc): Shared,
    Path(id): Path<String>,
    body: Result<Json<Operation>, JsonRejection>,
) -> ApiResult<Json<TablePayload>> {
    let Json(op) = body?;
    blocking(svc, move |s| s.execute(&id, &op)).await.map(Json)
}

async fn table(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Json<TablePayload>> {
    blocking(svc, move |s| s.table(&id)).await.map(Json)
}

async fn history(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let h = svc.history(&id)?;
    Ok(Json(json!({ "session_id": id, "history": h })))
}
