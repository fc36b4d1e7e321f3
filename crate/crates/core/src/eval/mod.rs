//! Evaluation protocol: frozen test cases, zero-discount task reward,
//! steady-state windows and multi-seed statistics.

pub mod experiment;
pub mod metrics;
pub mod testcase;
pub mod trajectory;

pub use experiment::{
    eval_env, evaluate_on, evaluate_policy, initial_policy, pi_policy, run_experiment, summarize, test_case_of_kind, test_cases,
    train_variant, write_rows, Comparison, ControllerSpec, ExperimentReport, MetricRow, PolicyFile, RunFailure,
    Summary, TrainedRun, METRIC_MEAN_REWARD, METRIC_STEADY_STATE,
};
pub use metrics::{mean_task_reward, relative_improvement, steady_state_metric, BoxStats, SteadyState};
pub use testcase::{
    gen_grid_steadystate, gen_grid_testcase, gen_motor_reference_profile, gen_motor_steadystate, Payload, TestCase,
    TestCaseKind,
};
pub use trajectory::{run_episode, Trajectory};
