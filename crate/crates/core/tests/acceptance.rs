//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criterion 6 trains twenty agents for 2e5 steps each and is far too slow
//! for a routine test run. By default its line is computed from the recorded
//! experiment under `results/desk-scale`; set `SECRL_ACCEPTANCE_SLOW=1` to
//! rerun the experiment from scratch instead. Its outcome is reported but not
//! asserted.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secrl::config::{RunConfig, Variant};
use secrl::ddpg::{
    actor_objective_and_grad, critic_loss_and_grad, AgentConfig, DdpgAgent, Experience, OuNoise, ReplayBuffer,
    Trainer,
};
use secrl::envs::grid::{grid_dynamics, GridParams};
use secrl::envs::motor::{motor_dynamics, MotorParams};
use secrl::envs::{EnvKind, Environment, GridEnv, GridEnvConfig, LoadProcess, LoadProcessConfig, MotorEnv, MotorEnvConfig, StepInput};
use secrl::eval::{
    evaluate_policy, pi_policy, summarize, test_case_of_kind, ControllerSpec, MetricRow, Summary, TestCaseKind,
};
use secrl::nn::{Mlp, MlpSpec, OutputActivation};
use secrl::sec::{combine_reward, sec_penalty, SecRewardConfig, SecState};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

// ---------------------------------------------------------------- 1

fn random_spec(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize, output: OutputActivation) -> MlpSpec {
    let depth = rng.random_range(1..=3);
    let width = rng.random_range(2..=10);
    let beta = rng.random_range(0.01..0.5);
    MlpSpec::uniform_hidden(inputs, width, depth, outputs, beta, output)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Central differences of `f` with respect to every parameter of `net`.
fn numeric_grad(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let base = net.to_flat();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let mut p = base.clone();
        p[j] = base[j] + h;
        probe.assign_flat(&p).unwrap();
        let up = f(&probe);
        p[j] = base[j] - h;
        probe.assign_flat(&p).unwrap();
        let down = f(&probe);
        out.push((up - down) / (2.0 * h));
    }
    out
}

fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_n = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm_a.max(norm_n).max(1e-12)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let obs_dim = rng.random_range(1..=6);
        let act_dim = rng.random_range(1..=4);
        let batch = rng.random_range(1..=8);
        let actor = Mlp::init(&random_spec(&mut rng, obs_dim, act_dim, OutputActivation::Tanh), &mut rng).unwrap();
        let critic = Mlp::init(
            &random_spec(&mut rng, obs_dim + act_dim, 1, OutputActivation::Linear),
            &mut rng,
        )
        .unwrap();
        let obs = random_matrix(&mut rng, batch, obs_dim);
        let actions = random_matrix(&mut rng, batch, act_dim);
        let targets = Array1::from_shape_fn(batch, |_| rng.random_range(-1.0..1.0));

        let (_, g) = critic_loss_and_grad(&critic, obs.view(), actions.view(), &targets).unwrap();
        let n = numeric_grad(&critic, |c| {
            critic_loss_and_grad(c, obs.view(), actions.view(), &targets).unwrap().0
        });
        worst = worst.max(rel_error(&g.to_flat(), &n));

        let (_, g) = actor_objective_and_grad(&actor, &critic, obs.view()).unwrap();
        let n = numeric_grad(&actor, |a| actor_objective_and_grad(a, &critic, obs.view()).unwrap().0);
        worst = worst.max(rel_error(&g.to_flat(), &n));
    }
    check(
        worst < 1e-5,
        format!("{cases} critic + {cases} actor cases, worst relative error {worst:.2e}"),
        format!("worst relative error {worst:.2e} >= 1e-5"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    // summation form, no clipping
    for _ in 0..200 {
        let mut sec = SecState::new(2, 0.31, 0.66).unwrap();
        let mut sums = [0.0f64; 2];
        for _ in 0..50 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(-0.01..0.01)).collect();
            sums[0] += raw[2];
            sums[1] += raw[3];
            let out = sec.apply(&raw).unwrap();
            if out.applied.iter().any(|u| u.abs() >= 1.0) {
                return Err("unexpected clipping in summation check".into());
            }
            for c in 0..2 {
                let expected: f64 = 0.31 * sums[c];
                if (sec.zeta()[c] - expected).abs() > 1e-12 {
                    return Err(format!("integrator {} differs from T_I * sum {}", sec.zeta()[c], expected));
                }
            }
        }
    }
    let mut sec = SecState::new(1, 0.31, 0.66).unwrap().with_zeta(vec![0.4]).unwrap();
    let out = sec.apply(&[0.9, 0.5]).unwrap();
    let aw_ok = (out.zeta_accumulated[0] - 0.555).abs() < 1e-12
        && (out.applied[0] - 1.0).abs() < 1e-12
        && (sec.zeta()[0] - 0.2547).abs() < 1e-12;
    if !aw_ok {
        return Err(format!("anti-windup example gave zeta {}", sec.zeta()[0]));
    }
    for _ in 0..10_000 {
        let mut sec = SecState::new(3, rng.random_range(0.005..2.0), rng.random_range(1e-5..1.0)).unwrap();
        for _ in 0..20 {
            let raw: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let out = sec.apply(&raw).unwrap();
            if out.applied.iter().any(|u| !(-1.0..=1.0).contains(u)) {
                return Err(format!("applied action {:?} outside [-1, 1]", out.applied));
            }
        }
    }
    let p1 = sec_penalty(&[1.0], 1.0, 0.946);
    let p3 = sec_penalty(&[1.0, 1.0, 1.0], 1.0, 0.946);
    let c = combine_reward(-0.054, 0.0, 0.0, 1.48, 1.13);
    let ok = (p1 + 0.054).abs() < 1e-12 && (p3 + 0.054).abs() < 1e-12 && (c + 0.054 / 3.61).abs() < 1e-12;
    check(
        ok,
        format!("summation exact, zeta 0.555 -> {:.4}, penalty {p1:.3}, combined {c:.6}", sec_zeta_example()),
        format!("penalty {p1}, {p3}; combined {c}"),
    )
}

fn sec_zeta_example() -> f64 {
    let mut sec = SecState::new(1, 0.31, 0.66).unwrap().with_zeta(vec![0.4]).unwrap();
    sec.apply(&[0.9, 0.5]).unwrap();
    sec.zeta()[0]
}

// ---------------------------------------------------------------- 3

fn experience(i: usize) -> Experience {
    Experience {
        obs: vec![i as f64],
        action: vec![0.0],
        reward: i as f64,
        next_obs: vec![i as f64 + 1.0],
        terminal: false,
    }
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();

    let mut buf = ReplayBuffer::new(5, 1, 1).unwrap();
    for i in 0..12 {
        buf.push(&experience(i)).unwrap();
    }
    let kept: Vec<f64> = buf.iter_ordered().map(|e| e.reward).collect();
    if kept != vec![7.0, 8.0, 9.0, 10.0, 11.0] {
        return Err(format!("ring kept {kept:?}"));
    }
    notes.push("eviction");

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = AgentConfig::default();
    let agent = DdpgAgent::new(4, 2, &cfg, &mut rng).unwrap();
    let mut b = ReplayBuffer::new(16, 4, 2).unwrap();
    for i in 0..16 {
        b.push(&Experience {
            obs: vec![0.1 * i as f64; 4],
            action: vec![0.5, -0.5],
            reward: -(i as f64) / 100.0,
            next_obs: vec![0.2; 4],
            terminal: true,
        })
        .unwrap();
    }
    let batch = b.sample(16, &mut rng).unwrap();
    let y = agent.bellman_targets(&batch).unwrap();
    if y != batch.rewards {
        return Err("terminal targets differ from rewards".into());
    }
    notes.push("terminal masking");

    let tau = cfg.tau;
    let mut agent = DdpgAgent::new(4, 2, &cfg, &mut rng).unwrap();
    let zeros = vec![0.0; agent.actor.num_params()];
    agent.actor.assign_flat(&zeros).unwrap();
    let zeros = vec![0.0; agent.critic.num_params()];
    agent.critic.assign_flat(&zeros).unwrap();
    let mut expected = agent.critic_target.to_flat();
    for _ in 0..100 {
        agent.update_targets().unwrap();
        expected.iter_mut().for_each(|x| *x *= 1.0 - tau);
    }
    if agent.critic_target.to_flat() != expected {
        return Err("target parameters are not (1 - tau)^n times their start".into());
    }
    notes.push("target decay exact");

    let mut ou = OuNoise::new(1, 10.0, 0.5, 0.3, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    for _ in 0..10_000 {
        ou.step(&mut rng);
    }
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = ou.step(&mut rng)[0];
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let target_var = ou.stationary_variance();
    let mean_ok = (mean - 0.3).abs() <= 0.05 * target_var.sqrt();
    let var_ok = (var / target_var - 1.0).abs() <= 0.05;
    if !(mean_ok && var_ok) {
        return Err(format!("OU mean {mean:.4} (0.3), variance {var:.5} ({target_var:.5})"));
    }
    notes.push("OU moments");

    let run = || {
        let rc = RunConfig::from_sources(None, &["train.total_steps=1000".into()]).unwrap();
        let tc = rc.train_config(Variant::SecDdpg).unwrap();
        let mut t = Trainer::new(rc.training_env(9).unwrap(), tc, 9).unwrap();
        t.run_until(1000).unwrap();
        let o = t.finish();
        (o.curve, o.agent.actor.to_flat(), o.agent.critic.to_flat())
    };
    let (a, b) = (run(), run());
    let same = a.0 == b.0 && a.1 == b.1 && a.2 == b.2;
    if !same {
        return Err("two seeded 1000-step runs differ".into());
    }
    notes.push("1000-step determinism");
    Ok(notes.join(", "))
}

// ---------------------------------------------------------------- 4

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn grid_steady_state(u: [f64; 3], r: f64, p: &GridParams) -> Vec<f64> {
    let w = 2.0 * std::f64::consts::PI * p.f;
    let v = u.map(|x| x * p.v_dc / 2.0);
    // rows: L di/dt = 0 and C dv/dt = 0
    let a = vec![
        vec![-p.r_f, w * p.l, 0.0, -1.0, 0.0, 0.0],
        vec![-w * p.l, -p.r_f, 0.0, 0.0, -1.0, 0.0],
        vec![0.0, 0.0, -p.r_f, 0.0, 0.0, -1.0],
        vec![1.0, 0.0, 0.0, -1.0 / r, w * p.c, 0.0],
        vec![0.0, 1.0, 0.0, -w * p.c, -1.0 / r, 0.0],
        vec![0.0, 0.0, 1.0, 0.0, 0.0, -1.0 / r],
    ];
    solve(a, vec![-v[0], -v[1], -v[2], 0.0, 0.0, 0.0])
}

fn motor_steady_state(u: [f64; 2], p: &MotorParams) -> Vec<f64> {
    let v = u.map(|x| x * p.v_dc / 2.0);
    let w = p.omega_el;
    let a = vec![vec![-p.r_s, w * p.l_q], vec![-w * p.l_d, -p.r_s]];
    solve(a, vec![-v[0], -v[1] + w * p.psi_pm])
}

fn rel_dist(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn criterion_4() -> Outcome {
    let gp = GridParams::default();
    let mut worst_lti: f64 = 0.0;
    for (u, r) in [([0.5, 0.1, 0.05], 50.0), ([0.3, -0.2, 0.0], 14.0), ([0.6, 0.0, -0.1], 200.0)] {
        let mut x = [0.0; 6];
        for _ in 0..30_000 {
            x = grid_dynamics(&x, &u, r, &gp).unwrap();
        }
        worst_lti = worst_lti.max(rel_dist(&x, &grid_steady_state(u, r, &gp)));
    }
    let mp = MotorParams::default();
    for u in [[0.1, 0.2], [-0.05, 0.3], [0.0, 0.4]] {
        let mut i = [0.0; 2];
        for _ in 0..30_000 {
            i = motor_dynamics(&i, &u, &mp).unwrap();
        }
        worst_lti = worst_lti.max(rel_dist(&i, &motor_steady_state(u, &mp)));
    }
    if worst_lti >= 1e-4 {
        return Err(format!("LTI steady state off by {worst_lti:.2e}"));
    }

    let mut fine = gp.clone();
    fine.substeps *= 2;
    let (mut a, mut b) = ([0.0; 6], [0.0; 6]);
    let mut worst_half: f64 = 0.0;
    for k in 0..200 {
        let u = [0.5 * (k as f64 * 0.05).sin(), 0.2, 0.0];
        a = grid_dynamics(&a, &u, 30.0, &gp).unwrap();
        b = grid_dynamics(&b, &u, 30.0, &fine).unwrap();
        worst_half = worst_half.max(rel_dist(&a, &b));
    }
    let mut mfine = mp.clone();
    mfine.substeps *= 2;
    let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
    for k in 0..200 {
        let u = [0.1, 0.3 * (k as f64 * 0.05).cos()];
        a = motor_dynamics(&a, &u, &mp).unwrap();
        b = motor_dynamics(&b, &u, &mfine).unwrap();
        worst_half = worst_half.max(rel_dist(&a, &b));
    }
    if worst_half >= 1e-6 {
        return Err(format!("step halving changes the state by {worst_half:.2e}"));
    }

    // dead time: an action only reaches the plant one period later
    let mut cfg = GridEnvConfig::default();
    cfg.measurement_noise = false;
    let mut pulsed = GridEnv::with_load_profile(cfg.clone(), 1, vec![50.0]).unwrap();
    let mut quiet = GridEnv::with_load_profile(cfg, 1, vec![50.0]).unwrap();
    let zeros = [0.0; 3];
    pulsed.reset(None).unwrap();
    quiet.reset(None).unwrap();
    pulsed.step(StepInput::plain(&[0.5, 0.0, 0.0], &zeros)).unwrap();
    quiet.step(StepInput::plain(&zeros, &zeros)).unwrap();
    let same_first = pulsed.plant_state() == quiet.plant_state();
    pulsed.step(StepInput::plain(&zeros, &zeros)).unwrap();
    quiet.step(StepInput::plain(&zeros, &zeros)).unwrap();
    let differ_second = pulsed.plant_state() != quiet.plant_state();

    let mcfg = MotorEnvConfig::default();
    let mut pulsed = MotorEnv::with_schedule(mcfg.clone(), 1, vec![[0.0, 0.0]; 4]).unwrap();
    let mut quiet = MotorEnv::with_schedule(mcfg, 1, vec![[0.0, 0.0]; 4]).unwrap();
    let z2 = [0.0; 2];
    pulsed.reset(None).unwrap();
    quiet.reset(None).unwrap();
    pulsed.step(StepInput::plain(&[0.3, 0.0], &z2)).unwrap();
    quiet.step(StepInput::plain(&z2, &z2)).unwrap();
    let m_same_first = pulsed.currents() == quiet.currents();
    pulsed.step(StepInput::plain(&z2, &z2)).unwrap();
    quiet.step(StepInput::plain(&z2, &z2)).unwrap();
    let m_differ_second = pulsed.currents() != quiet.currents();
    if !(same_first && differ_second && m_same_first && m_differ_second) {
        return Err("dead-time impulse response is not delayed by exactly one period".into());
    }

    let lcfg = LoadProcessConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut load = LoadProcess::new(lcfg.clone(), &mut rng).unwrap();
    let n = 1_000_000u64;
    let mut in_bounds = true;
    for _ in 0..n {
        let r = load.step(&mut rng);
        in_bounds &= (14.0..=200.0).contains(&r);
    }
    let p = lcfg.event_probability;
    let expected = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    let events = load.events() as f64;
    let rate_ok = (events - expected).abs() <= 3.0 * sigma;
    check(
        in_bounds && rate_ok && p == 0.002,
        format!(
            "LTI {worst_lti:.1e}, halving {worst_half:.1e}, dead time ok, {events} load events (expected {expected} +- {:.0})",
            3.0 * sigma
        ),
        format!("load bounds ok: {in_bounds}, events {events} vs {expected} +- {:.0}", 3.0 * sigma),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let cfg = RunConfig::from_sources(None, &["run.env=\"motor\"".into()]).unwrap();
    let tc = test_case_of_kind(&cfg, TestCaseKind::MotorSteadystate).unwrap();
    let pi = pi_policy(&cfg, 1).unwrap();
    let rows = evaluate_policy(&cfg, &pi, &[tc], None).unwrap();
    let segments: Vec<f64> = rows
        .iter()
        .filter(|r| r.metric_name.starts_with("segment_"))
        .map(|r| r.value)
        .collect();
    let worst_motor = segments.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if segments.len() != 20 || worst_motor >= 0.005 {
        return Err(format!("motor PI worst segment |reward| {worst_motor:.2e} over {} segments", segments.len()));
    }

    let cfg = RunConfig::default();
    let pi = pi_policy(&cfg, 1).unwrap();
    let ControllerSpec::GridPi { .. } = pi.controller else {
        return Err("grid baseline is not a cascade".into());
    };
    let mut worst_grid: f64 = 0.0;
    for r in [14.0, 50.0, 200.0] {
        let mut env_cfg = cfg.grid_env_config(false);
        env_cfg.measurement_noise = false;
        let mut env = GridEnv::with_load_profile(env_cfg, 1, vec![r]).unwrap();
        let mut ctrl = pi.build(&cfg).unwrap();
        let mut obs = env.reset(None).unwrap();
        ctrl.reset();
        let v_nom = cfg.env.grid.v_nom;
        for k in 0..5000 {
            let a = ctrl.act(&obs).unwrap();
            let t = env.step(a.input()).unwrap();
            if t.terminal {
                return Err(format!("grid cascade violated limits at {r} ohm"));
            }
            if k >= 4500 {
                let err = t
                    .info
                    .reference
                    .iter()
                    .zip(env.plant_state()[3..].iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_grid = worst_grid.max(err / v_nom);
            }
            obs = t.observation;
        }
    }
    check(
        worst_grid < 0.01,
        format!("motor worst segment {worst_motor:.1e}, grid worst voltage error {:.3} %", 100.0 * worst_grid),
        format!("grid voltage error {:.3} % >= 1 %", 100.0 * worst_grid),
    )
}

// ---------------------------------------------------------------- 6

fn results_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../results/desk-scale")
}

fn judge_env(summary: &Summary) -> Result<String, String> {
    let c = summary
        .comparison
        .iter()
        .find(|c| c.test_case_id.contains("steadystate") && c.metric_name == "steady_state_mean")
        .ok_or("no steady-state comparison in summary")?;
    let counts: Vec<usize> = ["ddpg", "sec-ddpg"]
        .iter()
        .map(|v| {
            summary.statistics.get(*v).map_or(0, |m| {
                m.get(&format!("{}/steady_state_mean", c.test_case_id)).map_or(0, |b| b.n)
            })
        })
        .collect();
    let best = c.best_improvement.unwrap_or(f64::NEG_INFINITY);
    let text = format!(
        "{:?}: median sec {:.4} vs ddpg {:.4}, best {:.4} vs {:.4} ({:+.0} %), seeds {:?}",
        summary.env,
        c.sec_ddpg_median,
        c.ddpg_median,
        c.sec_ddpg_best,
        c.ddpg_best,
        100.0 * best,
        counts
    );
    if counts.iter().all(|&n| n >= 5) && c.sec_ddpg_median > c.ddpg_median && best >= 0.2 {
        Ok(text)
    } else {
        Err(text)
    }
}

/// The finished summary if present, otherwise one assembled from the
/// per-run reports of an experiment still in progress.
fn recorded_summary(dir: &Path, env: &str) -> Option<Summary> {
    if let Ok(bytes) = std::fs::read(dir.join("summary.json")) {
        return serde_json::from_slice(&bytes).ok();
    }
    let mut rows: Vec<MetricRow> = Vec::new();
    for entry in std::fs::read_dir(dir.join("runs")).ok()?.flatten() {
        let Ok(mut r) = csv::Reader::from_path(entry.path().join("report.csv")) else {
            continue;
        };
        rows.extend(r.deserialize::<MetricRow>().flatten());
    }
    if rows.is_empty() {
        return None;
    }
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort();
    seeds.dedup();
    let mut ids: Vec<String> = rows.iter().map(|r| r.test_case_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let kind = if env == "grid" { EnvKind::Grid } else { EnvKind::Motor };
    summarize(kind, &seeds, &ids, &rows, Vec::new()).ok()
}

fn criterion_6() -> Outcome {
    let slow = std::env::var("SECRL_ACCEPTANCE_SLOW").is_ok_and(|v| v == "1");
    let mut parts = Vec::new();
    let mut pass = true;
    for env in ["grid", "motor"] {
        let summary: Summary = if slow {
            let dir = tempfile::tempdir().unwrap();
            let cfg = RunConfig::from_sources(
                None,
                &[
                    format!("run.env=\"{env}\""),
                    "run.variants=[\"ddpg\", \"sec-ddpg\"]".into(),
                    "run.seeds=[1, 2, 3, 4, 5]".into(),
                    "train.total_steps=200000".into(),
                    "eval.write_trajectories=false".into(),
                ],
            )
            .unwrap();
            secrl::eval::run_experiment(&cfg, Some(dir.path()), &mut |_| {}).unwrap().summary
        } else {
            let dir = results_dir().join(env);
            match recorded_summary(&dir, env) {
                Some(s) => s,
                None => {
                    pass = false;
                    parts.push(format!("{env}: no recorded run under {}", dir.display()));
                    continue;
                }
            }
        };
        match judge_env(&summary) {
            Ok(t) => parts.push(t),
            Err(t) => {
                pass = false;
                parts.push(t);
            }
        }
    }
    let source = if slow { "fresh run" } else { "recorded run" };
    let text = format!("{source}; {}", parts.join("; "));
    if pass {
        Ok(text)
    } else {
        Err(text)
    }
}

// ---------------------------------------------------------------- 7

fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (k, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[k] = acc;
    }
    out
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let gamma = 0.946;
    let cfg = SecRewardConfig {
        kappa_p: 1.48,
        kappa_i: 1.13,
        kappa_p_decay_start: 1000,
        kappa_i_decay_start: 2000,
        total_steps: 5000,
        gamma,
    };
    let floor = -(1.0 - gamma);
    for _ in 0..100_000 {
        let k = rng.random_range(0..6000);
        let task = rng.random_range(floor..=0.0);
        let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let i: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let r = cfg.shaped_reward(k, task, &p, &i);
        if !(floor - 1e-15..=0.0).contains(&r) {
            return Err(format!("combined reward {r} outside [{floor}, 0]"));
        }
    }
    let worst = cfg.shaped_reward(0, floor, &[1.0; 3], &[-1.0; 3]);

    // rewards actually stored while training both variants on both plants
    let mut steps_checked = 0;
    let mut worst_return: f64 = 0.0;
    for env_name in ["grid", "motor"] {
        for variant in [Variant::Ddpg, Variant::SecDdpg] {
            let rc = RunConfig::from_sources(
                None,
                &[
                    format!("run.env=\"{env_name}\""),
                    "train.total_steps=3000".into(),
                    // the bound does not depend on network size
                    "agent.critic_neurons=32".into(),
                ],
            )
            .unwrap();
            let tc = rc.train_config(variant).unwrap();
            let violation = tc.violation_reward;
            let mut t = Trainer::new(rc.training_env(5).unwrap(), tc, 5).unwrap();
            t.run_until(3000).unwrap();
            let mut episode: Vec<f64> = Vec::new();
            let exps: Vec<Experience> = t.buffer().iter_ordered().collect();
            let ends: Vec<u64> = t.curve().iter().map(|e| e.steps).collect();
            let mut idx = 0;
            for len in ends.iter().copied().chain(std::iter::once(u64::MAX)) {
                episode.clear();
                while idx < exps.len() && (episode.len() as u64) < len {
                    let e = &exps[idx];
                    let ok = if e.terminal {
                        e.reward == violation
                    } else {
                        (floor - 1e-15..=0.0).contains(&e.reward)
                    };
                    if !ok {
                        return Err(format!("{env_name} {}: stored reward {}", variant.as_str(), e.reward));
                    }
                    episode.push(e.reward);
                    idx += 1;
                }
                for g in discounted_returns(&episode, gamma) {
                    if !(-1.0 - 1e-12..=0.0).contains(&g) {
                        return Err(format!("{env_name} {}: discounted return {g}", variant.as_str()));
                    }
                    worst_return = worst_return.min(g);
                }
                steps_checked += episode.len();
            }
        }
    }
    Ok(format!(
        "worst combined reward {worst:.4} >= {floor:.4}; {steps_checked} stored rewards checked, worst return {worst_return:.4}"
    ))
}

// ----------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Outcome, bool); 7] = [
        (1, criterion_1, true),
        (2, criterion_2, true),
        (3, criterion_3, true),
        (4, criterion_4, true),
        (5, criterion_5, true),
        (6, criterion_6, false),
        (7, criterion_7, true),
    ];
    let mut failed = Vec::new();
    for (n, f, asserted) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("criterion {n}: PASS ({secs:.1} s) {detail}"),
            Err(detail) => println!("criterion {n}: FAIL ({secs:.1} s) {detail}"),
        }
        if outcome.is_err() && asserted {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
