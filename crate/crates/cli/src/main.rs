use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use secrl::api::{
    CompareRequest, ConfigSource, ErrorRecord, EvalRequest, JobState, JobStatus, TestCaseRequest, TrainRequest,
};
use secrl::config::Variant;
use secrl::eval::TestCaseKind;
use secrl_client::Client;

#[derive(Parser)]
#[command(name = "secrl", version, about = "Train and evaluate integral-action actor-critic controllers")]
struct Cli {
    /// Service to talk to; an embedded one on 127.0.0.1 is started when omitted.
    #[arg(long, global = true)]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "secrl-out")]
    out: PathBuf,
    /// `key=value` with a dotted key, e.g. `agent.gamma=0.9`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent; resumes from the checkpoint in --out if present.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Evaluate a policy on frozen test cases.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy file or training output directory; the untrained policy is used when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Test case file. Repeatable; the standard cases are used when omitted.
        #[arg(long = "test-case")]
        test_cases: Vec<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Train and evaluate every configured variant and seed.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Write frozen test case files.
    GenTestcase {
        #[command(flatten)]
        common: Common,
        /// Kind to generate. Repeatable; the standard cases of the plant when omitted.
        #[arg(long)]
        kind: Vec<TestCaseKind>,
    },
}

struct Failure {
    code: u8,
    record: ErrorRecord,
}

impl Failure {
    fn new(code: u8, error: &str, message: impl Into<String>) -> Self {
        Failure {
            code,
            record: ErrorRecord {
                error: error.into(),
                message: message.into(),
            },
        }
    }
}

impl From<secrl_client::ClientError> for Failure {
    fn from(e: secrl_client::ClientError) -> Self {
        let code = match &e {
            secrl_client::ClientError::Api { status, .. } if *status < 500 => 2,
            _ => 1,
        };
        Failure { code, record: e.record() }
    }
}

fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(p).map_err(|e| Failure::new(2, "io", format!("{}: {e}", p.display())))
}

fn config_source(common: &Common, seed_key: &str, variant: Option<Variant>) -> Result<ConfigSource, Failure> {
    let document = match &common.config {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| Failure::new(2, "config", format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = common.overrides.clone();
    if let Some(v) = variant {
        overrides.push(format!("run.variant=\"{}\"", v.as_str()));
    }
    if let Some(s) = common.seed {
        overrides.push(if seed_key == "run.seeds" {
            format!("run.seeds=[{s}]")
        } else {
            format!("{seed_key}={s}")
        });
    }
    Ok(ConfigSource { document, overrides })
}

fn emit(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

/// Follows a job, printing progress records to stderr; on Ctrl-C asks the
/// server to stop the job and waits for it to wind down.
async fn follow(client: &Client, id: &str) -> Result<JobStatus, Failure> {
    let mut seen = 0usize;
    let mut last_step = None;
    let mut interrupted = false;
    let ctrl_c = tokio::signal::ctrl_c();
    tokio::pin!(ctrl_c);
    loop {
        let status = client.job(id).await?;
        for line in &status.log[seen.min(status.log.len())..] {
            eprintln!("{}", serde_json::json!({ "event": "log", "message": line }));
        }
        seen = status.log.len();
        if let Some(p) = &status.progress {
            if last_step != Some(p.step) {
                last_step = Some(p.step);
                eprintln!("{}", serde_json::json!({ "event": "progress", "progress": p }));
            }
        }
        if status.state.is_finished() {
            if interrupted && status.state != JobState::Succeeded {
                let message = status.error.map(|e| e.message).unwrap_or_default();
                return Err(Failure::new(130, "interrupted", message));
            }
            return Ok(status);
        }
        tokio::select! {
            _ = tokio::time::sleep(Duration::from_millis(500)) => {}
            _ = &mut ctrl_c, if !interrupted => {
                interrupted = true;
                client.cancel(id).await?;
            }
        }
    }
}

fn finished(status: JobStatus) -> Result<(), Failure> {
    match (status.state, status.result, status.error) {
        (JobState::Succeeded, Some(result), _) => {
            emit(&result);
            Ok(())
        }
        (_, _, Some(record)) => Err(Failure { code: 1, record }),
        (state, _, _) => Err(Failure::new(1, "job", format!("job ended in state {state:?}"))),
    }
}

async fn run(cli: Cli) -> Result<(), Failure> {
    let client = match cli.server {
        Some(url) => Client::new(url),
        None => {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
                .await
                .map_err(|e| Failure::new(1, "io", e.to_string()))?;
            let addr = listener.local_addr().map_err(|e| Failure::new(1, "io", e.to_string()))?;
            tokio::spawn(secrl_service::serve(listener));
            Client::new(format!("http://{addr}"))
        }
    };
    match cli.command {
        Command::Train { common, variant } => {
            let req = TrainRequest {
                config: config_source(&common, "run.seed", variant)?,
                out: absolute(&common.out)?,
            };
            let job = client.submit_train(&req).await?;
            finished(follow(&client, &job.id).await?)
        }
        Command::Eval {
            common,
            policy,
            test_cases,
            variant,
        } => {
            let req = EvalRequest {
                config: config_source(&common, "run.seed", variant)?,
                policy: policy.as_deref().map(absolute).transpose()?,
                test_cases: test_cases.iter().map(|p| absolute(p)).collect::<Result<_, _>>()?,
                out: Some(absolute(&common.out)?),
            };
            let job = client.submit_eval(&req).await?;
            finished(follow(&client, &job.id).await?)
        }
        Command::Compare { common } => {
            let req = CompareRequest {
                config: config_source(&common, "run.seeds", None)?,
                out: Some(absolute(&common.out)?),
            };
            let job = client.submit_compare(&req).await?;
            finished(follow(&client, &job.id).await?)
        }
        Command::GenTestcase { common, kind } => {
            let req = TestCaseRequest {
                config: config_source(&common, "eval.test_case_seed", None)?,
                kinds: kind,
                out: absolute(&common.out)?,
            };
            let files = client.testcases(&req).await?;
            emit(&serde_json::json!({ "files": files.files }));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::new(2, "usage", e.to_string().trim_end());
            eprintln!("{}", serde_json::to_string(&f.record).unwrap_or_default());
            return ExitCode::from(f.code);
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": "io", "message": e.to_string() }));
            return ExitCode::from(1);
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f.record).unwrap_or_default());
            ExitCode::from(f.code)
        }
    }
}
