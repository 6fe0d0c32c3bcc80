//! Model-based baselines for actor-critic reinforcement learning.
//!
//! The crate solves a low-dimensional model of a robot-navigation task with
//! value iteration ([`vi`]) or model-predictive control ([`mpc`]), distills
//! the resulting value function into a neural baseline ([`baseline`]), and
//! warm-starts model-free learners with it ([`ppo`], [`td3`]). The remaining
//! modules provide the shared substrate: environments with lidar observations
//! ([`env`]), flat-parameter networks ([`nn`]), gradient diagnostics
//! ([`analysis`]), and experiment orchestration ([`exp`]).

pub mod analysis;
pub mod baseline;
pub mod env;
pub mod error;
pub mod mpc;
pub mod nn;
pub mod ppo;
pub mod td3;
pub mod vi;

pub use error::{MbbError, Result};
