//! Training and evaluation of agent variants across seeds and test cases.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{grid_pi_tune, GridCascade, GridCascadeGains, GridPiSearch, MotorPi, PiGains};
use crate::config::{RunConfig, Variant};
use crate::ddpg::{write_learning_curve, DdpgAgent, EpisodeRecord, Progress, Trainer};
use crate::envs::{AnyEnv, EnvKind, GridEnv, MotorEnv};
use crate::error::{Error, Result};
use crate::nn::NetworkFile;
use crate::policy::{ActorPolicy, Controller, SecParams};
use crate::seeds::{self, Stream};

use super::metrics::{mean_task_reward, relative_improvement, steady_state_metric, BoxStats};
use super::testcase::{
    gen_grid_steadystate, gen_grid_testcase, gen_motor_reference_profile, gen_motor_steadystate, Payload, TestCase,
    TestCaseKind,
};
use super::trajectory::{run_episode, Trajectory};

pub const POLICY_FORMAT: &str = "secrl-policy";
pub const POLICY_VERSION: u32 = 1;

pub const METRIC_MEAN_REWARD: &str = "mean_reward";
pub const METRIC_STEADY_STATE: &str = "steady_state_mean";

/// Serializable description of a trained or tuned controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ControllerSpec {
    Actor {
        actor: NetworkFile,
        sec: Option<SecParams>,
    },
    MotorPi {
        gains: [PiGains; 2],
        decoupling: bool,
    },
    GridPi {
        gains: GridCascadeGains,
        decoupling: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub env: EnvKind,
    pub variant: Variant,
    pub seed: u64,
    pub controller: ControllerSpec,
}

impl PolicyFile {
    pub fn new(env: EnvKind, variant: Variant, seed: u64, controller: ControllerSpec) -> Self {
        PolicyFile {
            format: POLICY_FORMAT.into(),
            version: POLICY_VERSION,
            env,
            variant,
            seed,
            controller,
        }
    }

    pub fn from_actor(env: EnvKind, variant: Variant, seed: u64, policy: &ActorPolicy) -> Self {
        Self::new(
            env,
            variant,
            seed,
            ControllerSpec::Actor {
                actor: NetworkFile::from(&policy.actor),
                sec: policy.sec,
            },
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: PolicyFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if f.format != POLICY_FORMAT || f.version != POLICY_VERSION {
            return Err(Error::Checkpoint(format!(
                "{} is not a version {POLICY_VERSION} policy file",
                path.display()
            )));
        }
        Ok(f)
    }

    /// Instantiates the controller, checking it against the configured plant.
    pub fn build(&self, cfg: &RunConfig) -> Result<Box<dyn Controller + Send>> {
        if self.env != cfg.run.env {
            return Err(Error::Config(format!(
                "policy was made for the {} plant, configuration selects {}",
                self.env.as_str(),
                cfg.run.env.as_str()
            )));
        }
        match &self.controller {
            ControllerSpec::Actor { actor, sec } => {
                let actor = actor.clone().into_network()?;
                let obs_dim = match cfg.run.env {
                    EnvKind::Grid => cfg.grid_env_config(false).obs_dim(),
                    EnvKind::Motor => cfg.motor_env_config(false).obs_dim(),
                };
                let m = cfg.run.env.channels();
                let width = if sec.is_some() { 2 * m } else { m };
                if actor.input_dim() != obs_dim {
                    return Err(Error::dim("policy input", obs_dim, actor.input_dim()));
                }
                if actor.output_dim() != width {
                    return Err(Error::dim("policy output", width, actor.output_dim()));
                }
                Ok(Box::new(ActorPolicy::new(actor, *sec)))
            }
            ControllerSpec::MotorPi { gains, decoupling } => {
                Ok(Box::new(MotorPi::new(cfg.env.motor.clone(), *gains, *decoupling)))
            }
            ControllerSpec::GridPi { gains, decoupling } => {
                let mut c = GridCascade::new(cfg.env.grid.clone(), *gains);
                c.decoupling = *decoupling;
                Ok(Box::new(c))
            }
        }
    }
}

/// Generates one frozen test case of `kind` from the configured seed.
pub fn test_case_of_kind(cfg: &RunConfig, kind: TestCaseKind) -> Result<TestCase> {
    let e = &cfg.eval;
    let seed = e.test_case_seed;
    let radius = cfg.motor_env_config(false).reference_radius();
    match kind {
        TestCaseKind::GridLoadProfile => gen_grid_testcase(&cfg.env.load, seed, e.profile_steps),
        TestCaseKind::GridSteadystate => gen_grid_steadystate(&cfg.env.load, seed, e.segments, e.segment_steps),
        TestCaseKind::MotorReferenceProfile => {
            gen_motor_reference_profile(radius, seed, e.segments * e.segment_steps, e.segment_steps)
        }
        TestCaseKind::MotorSteadystate => gen_motor_steadystate(radius, seed, e.segments, e.segment_steps),
    }
}

/// The standard frozen test cases of the configured plant.
pub fn test_cases(cfg: &RunConfig) -> Result<Vec<TestCase>> {
    let kinds = match cfg.run.env {
        EnvKind::Grid => [TestCaseKind::GridLoadProfile, TestCaseKind::GridSteadystate],
        EnvKind::Motor => [TestCaseKind::MotorReferenceProfile, TestCaseKind::MotorSteadystate],
    };
    kinds.into_iter().map(|k| test_case_of_kind(cfg, k)).collect()
}

/// Evaluation environment replaying a test case; measurement noise is
/// seeded by the test case so every agent sees the same disturbance.
pub fn eval_env(cfg: &RunConfig, tc: &TestCase) -> Result<AnyEnv> {
    tc.validate()?;
    let noise_seed = seeds::derive(tc.seed, Stream::Noise);
    match (&tc.payload, cfg.run.env) {
        (Payload::Load(profile), EnvKind::Grid) => Ok(AnyEnv::Grid(Box::new(GridEnv::with_load_profile(
            cfg.grid_env_config(false),
            noise_seed,
            profile.clone(),
        )?))),
        (Payload::Reference(schedule), EnvKind::Motor) => Ok(AnyEnv::Motor(Box::new(MotorEnv::with_schedule(
            cfg.motor_env_config(false),
            noise_seed,
            schedule.clone(),
        )?))),
        _ => Err(Error::Config(format!(
            "test case {} does not belong to the {} plant",
            tc.id,
            cfg.run.env.as_str()
        ))),
    }
}

fn reward_limit(cfg: &RunConfig) -> f64 {
    match cfg.run.env {
        EnvKind::Grid => cfg.env.grid.v_lim,
        EnvKind::Motor => cfg.env.motor.i_lim,
    }
}

/// One report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variant: Variant,
    pub seed: u64,
    pub test_case_id: String,
    pub metric_name: String,
    pub value: f64,
}

/// Rolls `controller` through `tc` and returns the trajectory with its metrics.
pub fn evaluate_on(
    cfg: &RunConfig,
    controller: &mut dyn Controller,
    tc: &TestCase,
) -> Result<(Trajectory, Vec<(String, f64)>)> {
    let mut env = eval_env(cfg, tc)?;
    let traj = run_episode(&mut env, controller, tc.steps, reward_limit(cfg))?;
    if traj.len() != tc.steps {
        return Err(Error::Environment(format!(
            "evaluation on {} stopped after {} of {} steps",
            tc.id,
            traj.len(),
            tc.steps
        )));
    }
    let mut metrics = vec![(METRIC_MEAN_REWARD.to_string(), mean_task_reward(&traj)?)];
    if let (true, Some(segment)) = (tc.kind.is_stepwise(), tc.segment) {
        let ss = steady_state_metric(&traj.reward, segment, cfg.steady_state_skip())?;
        metrics.push((METRIC_STEADY_STATE.to_string(), ss.mean));
        for (i, v) in ss.segments.iter().enumerate() {
            metrics.push((format!("segment_{i:02}"), *v));
        }
    }
    Ok((traj, metrics))
}

/// Outcome of training one learned variant.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub policy: PolicyFile,
    pub curve: Vec<EpisodeRecord>,
    pub agent: DdpgAgent,
}

/// Trains one learned variant from scratch, optionally checkpointing to
/// `checkpoint` every `checkpoint_every` steps and resuming from it.
pub fn train_variant(
    cfg: &RunConfig,
    variant: Variant,
    seed: u64,
    checkpoint: Option<&Path>,
    progress: &mut dyn FnMut(&Progress) -> bool,
) -> Result<TrainedRun> {
    let train_cfg = cfg.train_config(variant)?;
    let mut trainer = match checkpoint {
        Some(p) if p.exists() => {
            let t = Trainer::<AnyEnv>::load_checkpoint(p)?;
            if t.config() != &train_cfg {
                return Err(Error::Checkpoint(format!(
                    "{} was written with a different training configuration",
                    p.display()
                )));
            }
            t
        }
        _ => Trainer::new(cfg.training_env(seed)?, train_cfg, seed)?,
    };
    let total = trainer.config().total_steps;
    let every = cfg.run.checkpoint_every;
    let mut stopped = false;
    while trainer.step_count() < total && !stopped {
        let next = if every > 0 && checkpoint.is_some() {
            ((trainer.step_count() / every) + 1) * every
        } else {
            total
        };
        trainer.run_with(next, 1000, |p| {
            let go = progress(p);
            stopped |= !go;
            go
        })?;
        if let Some(p) = checkpoint {
            trainer.save_checkpoint(p)?;
        }
    }
    if stopped {
        return Err(Error::Training(format!(
            "interrupted at step {}; resume from the checkpoint",
            trainer.step_count()
        )));
    }
    let outcome = trainer.finish();
    Ok(TrainedRun {
        policy: PolicyFile::from_actor(cfg.run.env, variant, seed, &outcome.policy),
        curve: outcome.curve,
        agent: outcome.agent,
    })
}

/// PI controller for the configured plant; grid gains come from a seeded search.
pub fn pi_policy(cfg: &RunConfig, seed: u64) -> Result<PolicyFile> {
    let spec = match cfg.run.env {
        EnvKind::Motor => {
            let pi = MotorPi::tuned(cfg.env.motor.clone(), cfg.pi.decoupling)?;
            ControllerSpec::MotorPi {
                gains: pi.gains(),
                decoupling: cfg.pi.decoupling,
            }
        }
        EnvKind::Grid => {
            let search = GridPiSearch {
                steps: cfg.pi.tune_steps,
                ..GridPiSearch::default()
            };
            let tuned = grid_pi_tune(&cfg.grid_env_config(true), &search, seeds::derive(seed, Stream::Environment))?;
            ControllerSpec::GridPi {
                gains: tuned.gains,
                decoupling: cfg.pi.decoupling,
            }
        }
    };
    Ok(PolicyFile::new(cfg.run.env, Variant::Pi, seed, spec))
}

/// Untrained actor for a learned variant.
pub fn initial_policy(cfg: &RunConfig, variant: Variant, seed: u64) -> Result<PolicyFile> {
    let mut c = cfg.clone();
    c.train.total_steps = 0;
    let run = train_variant(&c, variant, seed, None, &mut |_| true)?;
    Ok(run.policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub variant: Variant,
    pub seed: u64,
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub test_case_id: String,
    pub metric_name: String,
    pub ddpg_median: f64,
    pub sec_ddpg_median: f64,
    /// Positive when the augmented agent is better.
    pub median_improvement: Option<f64>,
    pub ddpg_best: f64,
    pub sec_ddpg_best: f64,
    pub best_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: EnvKind,
    pub seeds: Vec<u64>,
    pub test_cases: Vec<String>,
    /// variant -> "test_case_id/metric" -> statistics over seeds.
    pub statistics: BTreeMap<String, BTreeMap<String, BoxStats>>,
    pub comparison: Vec<Comparison>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
}

/// Aggregates report rows into box statistics and the DDPG/SEC-DDPG comparison.
pub fn summarize(env: EnvKind, seeds: &[u64], test_cases: &[String], rows: &[MetricRow], failures: Vec<RunFailure>) -> Result<Summary> {
    let mut groups: BTreeMap<(Variant, String, String), Vec<(String, f64)>> = BTreeMap::new();
    for r in rows {
        if r.metric_name != METRIC_MEAN_REWARD && r.metric_name != METRIC_STEADY_STATE {
            continue;
        }
        groups
            .entry((r.variant, r.test_case_id.clone(), r.metric_name.clone()))
            .or_default()
            .push((format!("seed {}", r.seed), r.value));
    }
    let mut statistics: BTreeMap<String, BTreeMap<String, BoxStats>> = BTreeMap::new();
    for ((variant, tc, metric), values) in &groups {
        statistics
            .entry(variant.as_str().to_string())
            .or_default()
            .insert(format!("{tc}/{metric}"), BoxStats::from_labelled(values)?);
    }
    let mut comparison = Vec::new();
    for ((variant, tc, metric), sec_values) in &groups {
        if *variant != Variant::SecDdpg {
            continue;
        }
        let Some(ddpg_values) = groups.get(&(Variant::Ddpg, tc.clone(), metric.clone())) else {
            continue;
        };
        let sec = BoxStats::from_labelled(sec_values)?;
        let ddpg = BoxStats::from_labelled(ddpg_values)?;
        comparison.push(Comparison {
            test_case_id: tc.clone(),
            metric_name: metric.clone(),
            ddpg_median: ddpg.median,
            sec_ddpg_median: sec.median,
            median_improvement: relative_improvement(sec.median, ddpg.median),
            ddpg_best: ddpg.max,
            sec_ddpg_best: sec.max,
            best_improvement: relative_improvement(sec.max, ddpg.max),
        });
    }
    Ok(Summary {
        env,
        seeds: seeds.to_vec(),
        test_cases: test_cases.to_vec(),
        statistics,
        comparison,
        failures,
    })
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "seed", "test_case_id", "metric_name", "value"])?;
    for r in rows {
        w.write_record([
            r.variant.as_str().to_string(),
            r.seed.to_string(),
            r.test_case_id.clone(),
            r.metric_name.clone(),
            format!("{:e}", r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluates one policy on every test case, writing trajectories under `traj_dir`.
pub fn evaluate_policy(
    cfg: &RunConfig,
    policy: &PolicyFile,
    cases: &[TestCase],
    traj_dir: Option<&Path>,
) -> Result<Vec<MetricRow>> {
    let mut controller = policy.build(cfg)?;
    let mut rows = Vec::new();
    for tc in cases {
        let (traj, metrics) = evaluate_on(cfg, controller.as_mut(), tc)?;
        if let Some(dir) = traj_dir {
            std::fs::create_dir_all(dir)?;
            traj.write_csv(&dir.join(format!("{}-{}-{}.csv", policy.variant.as_str(), policy.seed, tc.id)))?;
        }
        rows.extend(metrics.into_iter().map(|(metric_name, value)| MetricRow {
            variant: policy.variant,
            seed: policy.seed,
            test_case_id: tc.id.clone(),
            metric_name,
            value,
        }));
    }
    Ok(rows)
}

/// Trains (or tunes) every variant for every seed, evaluates on the frozen
/// test cases and writes `report.csv` and `summary.json` under `out`.
/// Runs go seed by seed so partial results pair up; each run also leaves
/// its own report under `runs/`. Individual run failures are recorded in
/// the summary.
pub fn run_experiment(
    cfg: &RunConfig,
    out: Option<&Path>,
    log: &mut dyn FnMut(&str),
) -> Result<ExperimentReport> {
    let cases = test_cases(cfg)?;
    let traj_dir: Option<PathBuf> = match out {
        Some(o) if cfg.eval.write_trajectories => Some(o.join("trajectories")),
        _ => None,
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut variants = cfg.run.variants.clone();
    variants.sort();
    variants.dedup();
    let mut seeds_sorted = cfg.run.seeds.clone();
    seeds_sorted.sort();
    seeds_sorted.dedup();
    for &seed in &seeds_sorted {
        for &variant in &variants {
            log(&format!("{} seed {seed}: start", variant.as_str()));
            let result = (|| -> Result<Vec<MetricRow>> {
                let policy = if variant.is_learned() {
                    let run = train_variant(cfg, variant, seed, None, &mut |_| true)?;
                    if let Some(o) = out {
                        let dir = o.join("runs").join(format!("{}-{seed}", variant.as_str()));
                        std::fs::create_dir_all(&dir)?;
                        write_learning_curve(&dir.join("learning_curve.csv"), &run.curve)?;
                        run.policy.save(&dir.join("policy.json"))?;
                    }
                    run.policy
                } else {
                    pi_policy(cfg, seed)?
                };
                let rows = evaluate_policy(cfg, &policy, &cases, traj_dir.as_deref())?;
                if let Some(o) = out {
                    let dir = o.join("runs").join(format!("{}-{seed}", variant.as_str()));
                    std::fs::create_dir_all(&dir)?;
                    write_rows(&dir.join("report.csv"), &rows)?;
                }
                Ok(rows)
            })();
            match result {
                Ok(r) => {
                    log(&format!("{} seed {seed}: done", variant.as_str()));
                    rows.extend(r);
                }
                Err(e) => {
                    log(&format!("{} seed {seed}: failed: {e}", variant.as_str()));
                    failures.push(RunFailure {
                        variant,
                        seed,
                        error: e.kind().to_string(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    rows.sort_by_key(|r| (r.variant, r.seed));
    let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
    let summary = summarize(cfg.run.env, &seeds_sorted, &ids, &rows, failures)?;
    if let Some(o) = out {
        std::fs::create_dir_all(o)?;
        write_rows(&o.join("report.csv"), &rows)?;
        std::fs::write(o.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    }
    Ok(ExperimentReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: Variant, seed: u64, value: f64) -> MetricRow {
        MetricRow {
            variant,
            seed,
            test_case_id: "tc".into(),
            metric_name: METRIC_STEADY_STATE.into(),
            value,
        }
    }

    #[test]
    fn comparison_from_synthetic_rows() {
        let rows = vec![
            row(Variant::Ddpg, 1, -0.06),
            row(Variant::Ddpg, 2, -0.05),
            row(Variant::Ddpg, 3, -0.04),
            row(Variant::SecDdpg, 1, -0.03),
            row(Variant::SecDdpg, 2, -0.02),
            row(Variant::SecDdpg, 3, -0.025),
        ];
        let s = summarize(EnvKind::Grid, &[1, 2, 3], &["tc".into()], &rows, vec![]).unwrap();
        assert_eq!(s.comparison.len(), 1);
        let c = &s.comparison[0];
        assert_eq!(c.ddpg_median, -0.05);
        assert_eq!(c.sec_ddpg_median, -0.025);
        assert!((c.median_improvement.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(c.ddpg_best, -0.04);
        assert_eq!(c.sec_ddpg_best, -0.02);
        assert!((c.best_improvement.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(s.statistics["ddpg"]["tc/steady_state_mean"].n, 3);
    }
}
