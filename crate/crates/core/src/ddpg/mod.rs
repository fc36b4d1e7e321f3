//! Deep deterministic policy gradient learner.

pub mod agent;
pub mod noise;
pub mod replay;
pub mod schedule;
pub mod train;

pub use agent::{actor_objective_and_grad, critic_loss_and_grad, AgentConfig, DdpgAgent, UpdateStats};
pub use noise::{noisy_action, OuNoise};
pub use replay::{Batch, Experience, ReplayBuffer};
pub use schedule::LrSchedule;
pub use train::{
    train, write_learning_curve, EpisodeRecord, EventKind, Progress, SecConfig, TrainAbort, TrainConfig,
    TrainEvent, TrainOutcome, Trainer,
};
