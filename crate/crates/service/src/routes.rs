use axum::extract::{FromRequest, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use secrl::api::{
    CompareRequest, ErrorRecord, EvalRequest, Health, JobCreated, JobKind, JobStatus, Scalar, SecApplyRequest,
    SecApplyResponse, SecCombineRequest, SecPenaltyRequest, TestCaseRequest, TestCaseResponse, TrainRequest,
};
use secrl::sec::{combine_reward, sec_penalty, SecState};
use secrl::Error;

use crate::jobs::{self, JobStore};

pub struct ApiError(StatusCode, ErrorRecord);

impl ApiError {
    fn not_found(what: String) -> Self {
        ApiError(
            StatusCode::NOT_FOUND,
            ErrorRecord {
                error: "not-found".into(),
                message: what,
            },
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) | Error::Dimension { .. } | Error::Checkpoint(_) | Error::Json(_) => {
                StatusCode::BAD_REQUEST
            }
            Error::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, ErrorRecord::from(&e))
    }
}

impl From<axum::extract::rejection::JsonRejection> for ApiError {
    fn from(r: axum::extract::rejection::JsonRejection) -> Self {
        ApiError(
            r.status(),
            ErrorRecord {
                error: "request".into(),
                message: r.body_text(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct Body<T>(T);

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(store: JobStore) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/jobs/train", post(submit_train))
        .route("/v1/jobs/eval", post(submit_eval))
        .route("/v1/jobs/compare", post(submit_compare))
        .route("/v1/jobs/{id}", get(job_status).delete(cancel_job))
        .route("/v1/testcases", post(testcases))
        .route("/v1/sec/apply", post(sec_apply))
        .route("/v1/sec/penalty", post(sec_penalty_handler))
        .route("/v1/sec/combine", post(sec_combine))
        .with_state(store)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

fn accepted(id: String) -> (StatusCode, Json<JobCreated>) {
    (StatusCode::ACCEPTED, Json(JobCreated { id }))
}

async fn submit_train(
    State(store): State<JobStore>,
    Body(req): Body<TrainRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    req.config.resolve()?;
    Ok(accepted(store.spawn(JobKind::Train, move |job| jobs::run_train(&req, job))))
}

async fn submit_eval(
    State(store): State<JobStore>,
    Body(req): Body<EvalRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    req.config.resolve()?;
    Ok(accepted(store.spawn(JobKind::Eval, move |job| jobs::run_eval(&req, job))))
}

async fn submit_compare(
    State(store): State<JobStore>,
    Body(req): Body<CompareRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    req.config.resolve()?;
    Ok(accepted(store.spawn(JobKind::Compare, move |job| jobs::run_compare(&req, job))))
}

async fn job_status(State(store): State<JobStore>, Path(id): Path<String>) -> ApiResult<JobStatus> {
    let job = store.get(&id).ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
    Ok(Json(job.status()))
}

async fn cancel_job(State(store): State<JobStore>, Path(id): Path<String>) -> ApiResult<JobStatus> {
    let job = store.get(&id).ok_or_else(|| ApiError::not_found(format!("no job {id}")))?;
    job.request_cancel();
    Ok(Json(job.status()))
}

async fn testcases(Body(req): Body<TestCaseRequest>) -> ApiResult<TestCaseResponse> {
    let out = tokio::task::spawn_blocking(move || jobs::gen_testcases(&req))
        .await
        .map_err(|e| Error::Environment(e.to_string()))??;
    Ok(Json(out))
}

async fn sec_apply(Body(req): Body<SecApplyRequest>) -> ApiResult<SecApplyResponse> {
    if req.raw.len() % 2 != 0 {
        return Err(Error::Config(format!("raw action must have even length, got {}", req.raw.len())).into());
    }
    let mut state = SecState::new(req.raw.len() / 2, req.t_i, req.t_aw)?;
    if let Some(z) = req.zeta {
        state = state.with_zeta(z)?;
    }
    let out = state.apply(&req.raw)?;
    Ok(Json(SecApplyResponse {
        applied: out.applied,
        unclipped: out.unclipped,
        zeta_accumulated: out.zeta_accumulated,
        zeta: state.zeta().to_vec(),
    }))
}

async fn sec_penalty_handler(Body(req): Body<SecPenaltyRequest>) -> ApiResult<Scalar> {
    Ok(Json(Scalar {
        value: sec_penalty(&req.u, req.kappa, req.gamma),
    }))
}

async fn sec_combine(Body(req): Body<SecCombineRequest>) -> ApiResult<Scalar> {
    Ok(Json(Scalar {
        value: combine_reward(req.task, req.penalty_p, req.penalty_i, req.kappa_p, req.kappa_i),
    }))
}
