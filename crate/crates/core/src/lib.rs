//! Integral-action augmented actor-critic control.
//!
//! - [`nn`]: dense networks, exact gradients, optimizers
//! - [`ddpg`]: replay, exploration noise, actor/critic updates and the training loop
//! - [`sec`]: the integrating actor output, anti-windup and shaped reward
//! - [`envs`]: grid-forming inverter and PMSM current-loop plants
//! - [`baselines`]: PI controllers with anti-windup
//! - [`eval`]: frozen test cases, metrics and experiment reports
//! - [`config`]: run configuration with flat dotted keys

pub mod api;
pub mod baselines;
pub mod config;
pub mod ddpg;
pub mod error;
pub mod envs;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod sec;
pub mod seeds;

pub use error::{Error, Result};
