//! Thin async client for the secrl service.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use secrl::api::{
    CompareRequest, ErrorRecord, EvalRequest, Health, JobCreated, JobStatus, Scalar, SecApplyRequest,
    SecApplyResponse, SecCombineRequest, SecPenaltyRequest, TestCaseRequest, TestCaseResponse, TrainRequest,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {record}")]
    Api { status: u16, record: ErrorRecord },
}

impl ClientError {
    /// The record to report to the user.
    pub fn record(&self) -> ErrorRecord {
        match self {
            ClientError::Api { record, .. } => record.clone(),
            ClientError::Http(e) => ErrorRecord {
                error: "transport".into(),
                message: e.to_string(),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8700`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let record = serde_json::from_str(&text).unwrap_or(ErrorRecord {
            error: "http".into(),
            message: text,
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            record,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn submit_train(&self, req: &TrainRequest) -> Result<JobCreated> {
        self.post("/v1/jobs/train", req).await
    }

    pub async fn submit_eval(&self, req: &EvalRequest) -> Result<JobCreated> {
        self.post("/v1/jobs/eval", req).await
    }

    pub async fn submit_compare(&self, req: &CompareRequest) -> Result<JobCreated> {
        self.post("/v1/jobs/compare", req).await
    }

    pub async fn job(&self, id: &str) -> Result<JobStatus> {
        self.get(&format!("/v1/jobs/{id}")).await
    }

    pub async fn cancel(&self, id: &str) -> Result<JobStatus> {
        Self::decode(self.http.delete(format!("{}/v1/jobs/{id}", self.base)).send().await?).await
    }

    /// Polls until the job finishes, handing every observed status to `watch`.
    pub async fn wait(&self, id: &str, every: Duration, mut watch: impl FnMut(&JobStatus)) -> Result<JobStatus> {
        loop {
            let status = self.job(id).await?;
            watch(&status);
            if status.state.is_finished() {
                return Ok(status);
            }
            tokio::time::sleep(every).await;
        }
    }

    pub async fn testcases(&self, req: &TestCaseRequest) -> Result<TestCaseResponse> {
        self.post("/v1/testcases", req).await
    }

    pub async fn sec_apply(&self, req: &SecApplyRequest) -> Result<SecApplyResponse> {
        self.post("/v1/sec/apply", req).await
    }

    pub async fn sec_penalty(&self, req: &SecPenaltyRequest) -> Result<f64> {
        self.post::<_, Scalar>("/v1/sec/penalty", req).await.map(|s| s.value)
    }

    pub async fn sec_combine(&self, req: &SecCombineRequest) -> Result<f64> {
        self.post::<_, Scalar>("/v1/sec/combine", req).await.map(|s| s.value)
    }
}
