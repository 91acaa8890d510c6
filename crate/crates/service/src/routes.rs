use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use triz_core::kb::LookupError;
use triz_core::reporting::{self, Format};
use triz_core::SolutionReport;

use crate::error::ApiError;
use crate::job::{Job, JobRequest};
use crate::store::Collection;
use crate::{exec, AppState};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/jobs", post(submit_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/reports/{id}", get(get_report))
        .route("/api/results/{id}", get(get_result))
        .route("/api/kb/parameters", get(kb_parameters))
        .route("/api/kb/principles", get(kb_principles))
        .route("/api/kb/matrix/{improving}/{worsening}", get(kb_matrix))
        .route("/api/cases", get(cases))
        .route("/api/eval/{case_id}", get(get_eval))
        .fallback(|| async {
            ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: "no such route".into() }
        })
        .with_state(state)
}

async fn submit_job(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let mut req: JobRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::validation(format!("malformed job request: {e}")))?;
    if let Some(v) = headers.get(IDEMPOTENCY_HEADER) {
        let key = v.to_str().map_err(|_| ApiError::validation("idempotency key must be visible ASCII"))?;
        req.idempotency_key = Some(key.to_string());
    }
    let (job, created) = exec::submit(&state, req)?;
    let status = if created { StatusCode::ACCEPTED } else { StatusCode::OK };
    Ok((status, Json(job)).into_response())
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Job>, ApiError> {
    state.store().get(Collection::Jobs, &id)?.map(Json).ok_or_else(|| ApiError::not_found("job", &id))
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let report: SolutionReport =
        state.store().get(Collection::Reports, &id)?.ok_or_else(|| ApiError::not_found("report", &id))?;
    let fmt = q.format.as_deref().unwrap_or("json");
    if fmt == "json" {
        return Ok(Json(report).into_response());
    }
    let fmt: Format =
        fmt.parse().map_err(|_| ApiError::validation(format!("unknown format {fmt:?}; use json, md or tex")))?;
    let content_type = match fmt {
        Format::Markdown => "text/markdown; charset=utf-8",
        Format::Latex => "application/x-tex; charset=utf-8",
    };
    let text = reporting::render(&reporting::content(&state.0.kb, &report), fmt);
    Ok(([(header::CONTENT_TYPE, content_type)], text).into_response())
}

async fn get_result(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    state.store().get(Collection::Results, &id)?.map(Json).ok_or_else(|| ApiError::not_found("trial result", &id))
}

async fn kb_parameters(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.0.kb.parameters().to_vec())
}

async fn kb_principles(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.0.kb.principles().to_vec())
}

async fn kb_matrix(
    State(state): State<AppState>,
    Path((improving, worsening)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let parse =
        |s: &str| s.parse::<usize>().map_err(|_| ApiError::validation(format!("{s:?} is not a parameter index")));
    let (i, w) = (parse(&improving)?, parse(&worsening)?);
    match state.0.kb.lookup(i, w) {
        Ok(principles) => Ok(Json(serde_json::json!({
            "improving": i,
            "worsening": w,
            "principles": principles,
        }))
        .into_response()),
        Err(e @ LookupError::EmptyCell) => {
            Err(ApiError { status: StatusCode::NOT_FOUND, code: "empty_cell", message: e.to_string() })
        }
        Err(e) => Err(ApiError { status: StatusCode::BAD_REQUEST, code: "index_out_of_range", message: e.to_string() }),
    }
}

async fn cases(State(state): State<AppState>) -> impl IntoResponse {
    Json(state.0.cases.clone())
}

async fn get_eval(
    State(state): State<AppState>,
    Path(case_id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    state
        .store()
        .get(Collection::Eval, &case_id)?
        .map(Json)
        .ok_or_else(|| ApiError::not_found("evaluation for case", &case_id))
}
