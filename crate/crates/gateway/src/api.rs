//! HTTP API consumed by the dashboard, plus a server-sent event stream.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | liveness |
//! | GET | `/requests?user=` | all requests |
//! | GET | `/requests/pending?user=` | pending requests |
//! | POST | `/requests` | create (201) |
//! | GET | `/requests/{id}` | one request |
//! | POST | `/requests/{id}/decision` | `{decision, actor?}` |
//! | POST | `/requests/{id}/release` | release to the requester |
//! | GET, PUT | `/policies/{user}` | policy; PUT carries the version read |
//! | POST | `/revocations` | `{user_id, recipient, actor?}` |
//! | GET | `/ledger?user=&kind=&request=&from=&to=` | audit blocks |
//! | GET | `/ledger/verify` | chain status |
//! | GET | `/metrics` | counters |
//! | GET | `/events?user=` | SSE: `request.pending`, `request.decided`, `ledger.appended`, `policy.updated` |

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use petwear_core::consent::{ConsentError, ConsentPolicy, NewRequest, TransferRequest};
use petwear_core::dp::DpError;
use petwear_core::ledger::{AuditBlock, ChainStatus, Decision, EventKind, Filter};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

use crate::error::GatewayError;
use crate::release::ReleaseOutcome;
use crate::state::{Gateway, GatewayEvent, MetricsSnapshot};

type Shared = State<Arc<Gateway>>;

pub struct ApiError(GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &GatewayError) -> (StatusCode, &'static str) {
    match e {
        GatewayError::Consent(c) => match c {
            ConsentError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ConsentError::Unauthorized { .. } => (StatusCode::FORBIDDEN, "forbidden"),
            ConsentError::Conflict { .. } | ConsentError::VersionConflict { .. } => (StatusCode::CONFLICT, "conflict"),
            ConsentError::InvalidPolicy(_) | ConsentError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid"),
            ConsentError::UnwrapFailed => (StatusCode::FORBIDDEN, "revoked"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        },
        GatewayError::NotAllowed { .. } => (StatusCode::FORBIDDEN, "not_allowed"),
        GatewayError::NoData { .. } => (StatusCode::NOT_FOUND, "no_data"),
        GatewayError::Dp(DpError::BudgetExhausted { .. }) => (StatusCode::CONFLICT, "budget_exhausted"),
        GatewayError::Dp(DpError::PreferenceOutOfRange(_)) => (StatusCode::BAD_REQUEST, "invalid"),
        GatewayError::Config(_) | GatewayError::Json(_) => (StatusCode::BAD_REQUEST, "invalid"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = status_of(&self.0);
        (status, Json(json!({"error": self.0.to_string(), "code": code}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/requests", get(list_requests).post(create_request))
        .route("/requests/pending", get(pending))
        .route("/requests/{id}", get(get_request))
        .route("/requests/{id}/decision", post(decide))
        .route("/requests/{id}/release", post(release))
        .route("/policies/{user}", get(get_policy).put(put_policy))
        .route("/revocations", post(revoke))
        .route("/ledger", get(ledger))
        .route("/ledger/verify", get(verify_ledger))
        .route("/metrics", get(metrics))
        .route("/events", get(events))
        .with_state(gw)
}

/// Bind and serve until the process ends.
pub async fn serve(gw: Arc<Gateway>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(gw)).await
}

#[derive(Debug, Default, Deserialize)]
struct UserQuery {
    user: Option<String>,
}

async fn list_requests(State(gw): Shared, Query(q): Query<UserQuery>) -> Json<Vec<TransferRequest>> {
    Json(gw.requests(q.user.as_deref()))
}

async fn pending(State(gw): Shared, Query(q): Query<UserQuery>) -> Json<Vec<TransferRequest>> {
    Json(gw.pending(q.user.as_deref()))
}

async fn create_request(State(gw): Shared, Json(new): Json<NewRequest>) -> ApiResult<(StatusCode, Json<TransferRequest>)> {
    Ok((StatusCode::CREATED, Json(gw.create_request(new)?)))
}

async fn get_request(State(gw): Shared, Path(id): Path<String>) -> ApiResult<Json<TransferRequest>> {
    gw.request(&id).map(Json).ok_or_else(|| GatewayError::from(ConsentError::NotFound(id)).into())
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    decision: Decision,
    /// Defaults to the data subject of the request.
    actor: Option<String>,
}

async fn decide(State(gw): Shared, Path(id): Path<String>, Json(body): Json<DecisionBody>) -> ApiResult<Json<TransferRequest>> {
    let actor = match body.actor {
        Some(a) => a,
        None => gw.request(&id).ok_or_else(|| GatewayError::from(ConsentError::NotFound(id.clone())))?.user_id,
    };
    Ok(Json(gw.decide(&id, body.decision, &actor)?))
}

async fn release(State(gw): Shared, Path(id): Path<String>) -> ApiResult<Json<ReleaseOutcome>> {
    // Decryption is CPU-bound; keep it off the async workers.
    let out = tokio::task::spawn_blocking(move || gw.release_for_analysis(&id))
        .await
        .map_err(|e| GatewayError::Config(format!("release task failed: {e}")))??;
    Ok(Json(out))
}

async fn get_policy(State(gw): Shared, Path(user): Path<String>) -> Json<ConsentPolicy> {
    Json(gw.policy(&user))
}

async fn put_policy(State(gw): Shared, Path(user): Path<String>, Json(policy): Json<ConsentPolicy>) -> ApiResult<Json<ConsentPolicy>> {
    if policy.user_id != user {
        return Err(GatewayError::from(ConsentError::InvalidPolicy(format!("body is for {}, path is {user}", policy.user_id))).into());
    }
    Ok(Json(gw.put_policy(policy)?))
}

#[derive(Debug, Deserialize)]
struct RevokeBody {
    user_id: String,
    recipient: String,
    actor: Option<String>,
}

async fn revoke(State(gw): Shared, Json(body): Json<RevokeBody>) -> ApiResult<Json<Value>> {
    let actor = body.actor.unwrap_or_else(|| body.user_id.clone());
    let changed = gw.revoke(&body.user_id, &body.recipient, &actor)?;
    Ok(Json(json!({"user_id": body.user_id, "recipient": body.recipient, "revoked": changed})))
}

#[derive(Debug, Default, Deserialize)]
struct LedgerQuery {
    user: Option<String>,
    kind: Option<String>,
    request: Option<String>,
    from: Option<i64>,
    to: Option<i64>,
}

/// Accepts `KeyReleased`, `key_released`, `key-released` and so on.
pub fn parse_kind(s: &str) -> Option<EventKind> {
    let norm = |x: &str| x.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
    let want = norm(s);
    (0..=u8::MAX)
        .filter_map(EventKind::from_code)
        .find(|k| norm(&format!("{k:?}")) == want)
}

async fn ledger(State(gw): Shared, Query(q): Query<LedgerQuery>) -> ApiResult<Json<Vec<AuditBlock>>> {
    let kind = match q.kind.as_deref() {
        None | Some("") => None,
        Some(k) => Some(parse_kind(k).ok_or_else(|| GatewayError::Config(format!("unknown event kind {k}")))?),
    };
    let filter = Filter { user_id: q.user, kind, request_id: q.request, from: q.from, to: q.to };
    Ok(Json(gw.ledger_query(&filter)))
}

async fn verify_ledger(State(gw): Shared) -> Json<Value> {
    match gw.ledger().verify() {
        ChainStatus::Intact { blocks } => Json(json!({"intact": true, "blocks": blocks})),
        ChainStatus::Broken { index, reason } => Json(json!({"intact": false, "index": index, "reason": reason})),
    }
}

async fn metrics(State(gw): Shared) -> Json<MetricsSnapshot> {
    Json(gw.metrics())
}

fn event_user(ev: &GatewayEvent) -> Option<&str> {
    ev.data
        .get("user_id")
        .or_else(|| ev.data.get("event").and_then(|e| e.get("user_id")))
        .and_then(Value::as_str)
}

async fn events(State(gw): Shared, Query(q): Query<UserQuery>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = gw.subscribe();
    let stream = stream::unfold((rx, q.user), |(mut rx, user)| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    if user.as_deref().is_some_and(|u| event_user(&ev) != Some(u)) {
                        continue;
                    }
                    let sse = Event::default().event(ev.event.clone()).data(ev.data.to_string());
                    return Some((Ok(sse), (rx, user)));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}
