//! Job bookkeeping and the blocking work behind each endpoint.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use secrl::api::{
    CompareRequest, ErrorRecord, EvalRequest, JobKind, JobState, JobStatus, TestCaseRequest, TestCaseResponse,
    TrainRequest, TrainResult,
};
use secrl::config::RunConfig;
use secrl::ddpg::{write_learning_curve, Progress};
use secrl::eval::{
    evaluate_policy, initial_policy, pi_policy, run_experiment, summarize, test_case_of_kind, test_cases,
    train_variant, write_rows, ExperimentReport, PolicyFile, TestCase,
};
use secrl::{Error, Result};

pub struct Job {
    status: Mutex<JobStatus>,
    cancel: AtomicBool,
}

impl Job {
    fn new(id: String, kind: JobKind) -> Self {
        Job {
            status: Mutex::new(JobStatus {
                id,
                kind,
                state: JobState::Queued,
                progress: None,
                log: Vec::new(),
                result: None,
                error: None,
            }),
            cancel: AtomicBool::new(false),
        }
    }

    pub fn status(&self) -> JobStatus {
        self.status.lock().unwrap().clone()
    }

    pub fn request_cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    fn update(&self, f: impl FnOnce(&mut JobStatus)) {
        f(&mut self.status.lock().unwrap());
    }

    pub fn log(&self, line: impl Into<String>) {
        let line = line.into();
        tracing::info!(target: "secrl::job", "{line}");
        self.update(|s| s.log.push(line));
    }

    pub fn progress(&self, p: &Progress) {
        self.update(|s| s.progress = Some(p.clone()));
    }

    fn finish(&self, outcome: Result<serde_json::Value>) {
        let cancelled = self.cancelled();
        self.update(|s| match outcome {
            Ok(v) => {
                s.state = JobState::Succeeded;
                s.result = Some(v);
            }
            Err(e) => {
                s.state = if cancelled { JobState::Cancelled } else { JobState::Failed };
                s.error = Some(ErrorRecord::from(&e));
            }
        });
    }
}

#[derive(Clone, Default)]
pub struct JobStore {
    jobs: Arc<Mutex<HashMap<String, Arc<Job>>>>,
}

impl JobStore {
    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    /// Registers a job and runs `work` on the blocking pool.
    pub fn spawn<F>(&self, kind: JobKind, work: F) -> String
    where
        F: FnOnce(&Job) -> Result<serde_json::Value> + Send + 'static,
    {
        let id = uuid::Uuid::new_v4().to_string();
        let job = Arc::new(Job::new(id.clone(), kind));
        self.jobs.lock().unwrap().insert(id.clone(), job.clone());
        tokio::task::spawn_blocking(move || {
            job.update(|s| s.state = JobState::Running);
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| work(&job)))
                .unwrap_or_else(|_| Err(Error::Training("job panicked".into())));
            job.finish(outcome);
        });
        id
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

pub fn run_train(req: &TrainRequest, job: &Job) -> Result<serde_json::Value> {
    let cfg = req.config.resolve()?;
    cfg.echo(&req.out)?;
    let variant = cfg.run.variant;
    let seed = cfg.run.seed;
    let policy_path = req.out.join("policy.json");
    let curve_path = req.out.join("learning_curve.csv");
    if !variant.is_learned() {
        job.log(format!("tuning {} baseline", cfg.run.env.as_str()));
        pi_policy(&cfg, seed)?.save(&policy_path)?;
        return to_value(&TrainResult {
            variant,
            seed,
            steps: 0,
            episodes: 0,
            checkpoint: None,
            policy: policy_path,
            learning_curve: None,
        });
    }
    let checkpoint = req.out.join("checkpoint.bin");
    if checkpoint.exists() {
        job.log(format!("resuming from {}", checkpoint.display()));
    }
    let run = train_variant(&cfg, variant, seed, Some(&checkpoint), &mut |p| {
        job.progress(p);
        !job.cancelled()
    })?;
    write_learning_curve(&curve_path, &run.curve)?;
    run.policy.save(&policy_path)?;
    job.log(format!("trained {} for {} steps", variant.as_str(), cfg.train.total_steps));
    to_value(&TrainResult {
        variant,
        seed,
        steps: cfg.train.total_steps,
        episodes: run.curve.len(),
        checkpoint: Some(checkpoint),
        policy: policy_path,
        learning_curve: Some(curve_path),
    })
}

fn load_policy(cfg: &RunConfig, path: Option<&Path>) -> Result<PolicyFile> {
    match path {
        Some(p) if p.is_dir() => PolicyFile::load(&p.join("policy.json")),
        Some(p) => PolicyFile::load(p),
        None if cfg.run.variant.is_learned() => initial_policy(cfg, cfg.run.variant, cfg.run.seed),
        None => pi_policy(cfg, cfg.run.seed),
    }
}

pub fn run_eval(req: &EvalRequest, job: &Job) -> Result<serde_json::Value> {
    let cfg = req.config.resolve()?;
    let policy = load_policy(&cfg, req.policy.as_deref())?;
    let cases = if req.test_cases.is_empty() {
        test_cases(&cfg)?
    } else {
        req.test_cases.iter().map(|p| TestCase::load(p)).collect::<Result<Vec<_>>>()?
    };
    let traj_dir: Option<PathBuf> = match &req.out {
        Some(o) if cfg.eval.write_trajectories => Some(o.join("trajectories")),
        _ => None,
    };
    job.log(format!(
        "evaluating {} seed {} on {} test case(s)",
        policy.variant.as_str(),
        policy.seed,
        cases.len()
    ));
    let rows = evaluate_policy(&cfg, &policy, &cases, traj_dir.as_deref())?;
    let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
    let summary = summarize(cfg.run.env, &[policy.seed], &ids, &rows, Vec::new())?;
    if let Some(o) = &req.out {
        cfg.echo(o)?;
        write_rows(&o.join("report.csv"), &rows)?;
        std::fs::write(o.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    }
    to_value(&ExperimentReport { rows, summary })
}

pub fn run_compare(req: &CompareRequest, job: &Job) -> Result<serde_json::Value> {
    let cfg = req.config.resolve()?;
    if let Some(o) = &req.out {
        cfg.echo(o)?;
    }
    let report = run_experiment(&cfg, req.out.as_deref(), &mut |line| job.log(line))?;
    to_value(&report.summary)
}

pub fn gen_testcases(req: &TestCaseRequest) -> Result<TestCaseResponse> {
    let cfg = req.config.resolve()?;
    let cases = if req.kinds.is_empty() {
        test_cases(&cfg)?
    } else {
        req.kinds.iter().map(|&k| test_case_of_kind(&cfg, k)).collect::<Result<Vec<_>>>()?
    };
    std::fs::create_dir_all(&req.out)?;
    let mut files = Vec::new();
    for tc in &cases {
        let path = req.out.join(format!("{}.json", tc.id));
        tc.save(&path)?;
        files.push(path);
    }
    Ok(TestCaseResponse { files })
}
