//! Wire types shared by the service and its clients.
//!
//! Paths in requests are resolved on the machine running the service.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Variant};
use crate::ddpg::Progress;
use crate::error::{Error, Result};
use crate::eval::TestCaseKind;

/// Configuration as sent over the wire: an optional TOML document plus
/// `key=value` overrides applied on top of it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSource {
    #[serde(default)]
    pub document: Option<String>,
    #[serde(default)]
    pub overrides: Vec<String>,
}

impl ConfigSource {
    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::from_sources(self.document.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    #[serde(default)]
    pub config: ConfigSource,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    #[serde(default)]
    pub config: ConfigSource,
    /// Policy file; without one the untrained policy of `run.variant` is used.
    #[serde(default)]
    pub policy: Option<PathBuf>,
    /// Frozen test case files; empty means the standard cases of the plant.
    #[serde(default)]
    pub test_cases: Vec<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    #[serde(default)]
    pub config: ConfigSource,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCaseRequest {
    #[serde(default)]
    pub config: ConfigSource,
    /// Kinds to generate; empty means the standard cases of the plant.
    #[serde(default)]
    pub kinds: Vec<TestCaseKind>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseResponse {
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Train,
    Eval,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Succeeded | JobState::Failed | JobState::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    #[serde(default)]
    pub progress: Option<Progress>,
    /// Log lines in order of emission.
    #[serde(default)]
    pub log: Vec<String>,
    #[serde(default)]
    pub result: Option<serde_json::Value>,
    #[serde(default)]
    pub error: Option<ErrorRecord>,
}

/// Machine-readable failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord {
            error: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for ErrorRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub variant: Variant,
    pub seed: u64,
    pub steps: u64,
    pub episodes: usize,
    pub checkpoint: Option<PathBuf>,
    pub policy: PathBuf,
    pub learning_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecApplyRequest {
    pub raw: Vec<f64>,
    #[serde(default)]
    pub zeta: Option<Vec<f64>>,
    pub t_i: f64,
    pub t_aw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecApplyResponse {
    pub applied: Vec<f64>,
    pub unclipped: Vec<f64>,
    pub zeta_accumulated: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecPenaltyRequest {
    pub u: Vec<f64>,
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecCombineRequest {
    pub task: f64,
    pub penalty_p: f64,
    pub penalty_i: f64,
    pub kappa_p: f64,
    pub kappa_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}
