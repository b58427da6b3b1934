//! Model, solver and learner for an RF-powered cognitive-radio secondary transmitter
//! that can harvest energy or backscatter while the primary channel is busy and
//! transmit actively while it is idle.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases below
//! fix the scalar to `f64`, which is what the experiment driver uses.

pub mod baselines;
pub mod env;
pub mod error;
pub mod learner;
pub mod mdp;
pub mod metrics;
pub mod scalar;

pub use baselines::{backscatter_policy, htt_policy, run_trajectory, Baseline, PolicySource};
pub use env::{Action, ActionSet, Channel, EnvParams, Environment, Simulator, SlotOutcome, State, StateSpace};
pub use error::{Error, Result};
pub use learner::{LearnerConfig, ScheduleMode, StepSchedule};
pub use metrics::{derive_seed, rng_from_seed, RunMetrics};
pub use scalar::Scalar;

pub type EnvParams64 = EnvParams<f64>;
pub type TransitionModel64 = mdp::TransitionModel<f64>;
pub type Policy64 = mdp::Policy<f64>;
pub type Solution64 = mdp::Solution<f64>;
pub type PolicyParams64 = learner::PolicyParams<f64>;
pub type LearningRun64 = learner::LearningRun<f64>;
