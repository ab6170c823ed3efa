//! JSON-over-HTTP surface. Bodies use the workspace file schemas; errors are
//! `{code, message, details}` with a status derived from the code.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::net::TcpListener;

use cqkit_core::cq::ConfirmVerdict;
use cqkit_core::ontology::OntologyFormat;
use cqkit_core::testing::LabeledCq;
use cqkit_core::workspace::OntologySource;

use crate::error::ApiError;
use crate::service::Service;

type AppState = State<Arc<Service>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// Parses a JSON body; an empty body is read as `{}` so that requests whose
/// fields are all optional may omit it.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Deserialize)]
struct NewProject {
    name: String,
}

#[derive(Deserialize)]
struct Message {
    text: String,
}

#[derive(Deserialize)]
struct Refinement {
    feedback: String,
}

#[derive(Deserialize)]
struct ExtractRequest {
    story_ref: String,
}

#[derive(Deserialize)]
struct ConfirmRequest {
    verdict: ConfirmVerdict,
    #[serde(default)]
    feedback: Option<String>,
}

#[derive(Deserialize)]
struct ClusterRequest {
    #[serde(default)]
    k: Option<usize>,
}

#[derive(Deserialize)]
struct TestRequest {
    ontology_ref: String,
    suite: Vec<LabeledCq>,
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{p}", get(project))
        .route("/projects/{p}/sessions", post(start_session))
        .route("/sessions/{s}", get(session))
        .route("/sessions/{s}/messages", post(submit_message))
        .route("/sessions/{s}/draft", post(draft))
        .route("/sessions/{s}/refine", post(refine))
        .route("/sessions/{s}/finalize", post(finalize))
        .route("/stories/{id}", get(story))
        .route("/projects/{p}/cq/extract", post(extract))
        .route("/cq/{set}", get(cq_set))
        .route("/cq/{set}/split", post(split))
        .route("/cq/{set}/abstract", post(abstract_entities))
        .route("/cq/{set}/confirm", post(confirm))
        .route("/cq/{set}/dedupe", post(dedupe))
        .route("/cq/{set}/cluster", post(cluster))
        .route("/clusterings/{id}", get(clustering))
        .route("/projects/{p}/ontology", post(upload_ontology))
        .route("/ontology/{o}", get(ontology))
        .route("/ontology/{o}/verbalize", post(verbalize))
        .route("/verbalizations/{id}", get(verbalization))
        .route("/projects/{p}/test", post(run_test))
        .route("/reports/{id}", get(report))
        .route("/reports/{id}/markdown", get(report_markdown))
        .fallback(|| async { ApiError::new(cqkit_core::error::NOT_FOUND, "no such endpoint") })
        .with_state(service)
}

async fn create_project(State(s): AppState, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: NewProject = body(&bytes)?;
    Ok(Json(s.create_project(&req.name)?))
}

async fn list_projects(State(s): AppState) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.list_projects()?))
}

async fn project(State(s): AppState, Path(p): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.project(&p)?))
}

async fn start_session(State(s): AppState, Path(p): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.start_session(&p)?))
}

async fn session(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.session(&id)?))
}

async fn submit_message(State(s): AppState, Path(id): Path<String>, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: Message = body(&bytes)?;
    Ok(Json(s.submit_message(&id, &req.text).await?))
}

async fn draft(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.draft(&id).await?))
}

async fn refine(State(s): AppState, Path(id): Path<String>, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: Refinement = body(&bytes)?;
    Ok(Json(s.refine(&id, &req.feedback).await?))
}

async fn finalize(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.finalize(&id).await?))
}

async fn story(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.story(&id)?))
}

async fn extract(State(s): AppState, Path(p): Path<String>, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: ExtractRequest = body(&bytes)?;
    Ok(Json(s.extract(&p, &req.story_ref).await?))
}

async fn cq_set(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.cq_set(&id)?.1))
}

async fn split(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.split(&id).await?))
}

async fn abstract_entities(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.abstract_entities(&id).await?))
}

async fn confirm(State(s): AppState, Path(id): Path<String>, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: ConfirmRequest = body(&bytes)?;
    Ok(Json(s.confirm(&id, req.verdict, req.feedback.as_deref()).await?))
}

async fn dedupe(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.dedupe(&id).await?))
}

async fn cluster(State(s): AppState, Path(id): Path<String>, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: ClusterRequest = body(&bytes)?;
    Ok(Json(s.cluster(&id, req.k).await?))
}

async fn clustering(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.clustering(&id)?))
}

/// The format comes from `?format=` (`ttl`/`turtle`, `rdf`/`xml`) or the
/// content type; Turtle is the default.
fn ontology_format(query: &FormatQuery, headers: &HeaderMap) -> Result<OntologyFormat, ApiError> {
    if let Some(format) = &query.format {
        return Ok(format.parse()?);
    }
    let content_type = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    Ok(if content_type.starts_with("application/rdf+xml") { OntologyFormat::RdfXml } else { OntologyFormat::Turtle })
}

async fn upload_ontology(
    State(s): AppState,
    Path(p): Path<String>,
    Query(query): Query<FormatQuery>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<impl serde::Serialize> {
    let format = ontology_format(&query, &headers)?;
    let text = String::from_utf8(bytes.to_vec()).map_err(|_| ApiError::bad_request("ontology body is not UTF-8"))?;
    Ok(Json(s.upload_ontology(&p, OntologySource { format, text })?))
}

async fn ontology(State(s): AppState, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (_, source) = s.ontology(&id)?;
    let content_type = match source.format {
        OntologyFormat::Turtle => "text/turtle; charset=utf-8",
        OntologyFormat::RdfXml => "application/rdf+xml; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], source.text).into_response())
}

async fn verbalize(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.verbalize(&id)?))
}

async fn verbalization(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.verbalization(&id)?))
}

async fn run_test(State(s): AppState, Path(p): Path<String>, bytes: Bytes) -> ApiResult<impl serde::Serialize> {
    let req: TestRequest = body(&bytes)?;
    Ok(Json(s.run_test(&p, &req.ontology_ref, &req.suite).await?))
}

async fn report(State(s): AppState, Path(id): Path<String>) -> ApiResult<impl serde::Serialize> {
    Ok(Json(s.report(&id)?))
}

async fn report_markdown(State(s): AppState, Path(id): Path<String>) -> Result<Response, ApiError> {
    let markdown = s.report(&id)?.to_markdown();
    Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], markdown).into_response())
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ApiError> {
    TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => {
            ApiError::new(cqkit_core::error::PORT_IN_USE, format!("address {addr} is already in use"))
        }
        _ => ApiError::bad_config(format!("cannot listen on {addr}: {e}")),
    })
}

/// Serves until the future `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ApiError> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}
