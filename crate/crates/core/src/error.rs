use thiserror::Error;

use crate::env::{Action, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("action {action:?} is not permitted in state {state}")]
    InfeasibleAction { state: State, action: Action },

    #[error("state {state} lies outside the state space")]
    StateOutOfRange { state: State },

    #[error("relative value iteration did not converge after {iterations} iterations (last span {last_span:e})")]
    NonConvergence { iterations: usize, last_span: f64 },

    #[error("induced chain violates the recurrence assumption: {0}")]
    NotUnichain(String),

    #[error("induced chain is periodic with period {period}; the recurrence assumption requires an aperiodic chain")]
    Periodic { period: usize },

    #[error("policy is malformed at state index {state_index}: {reason}")]
    InvalidPolicy { state_index: usize, reason: String },

    #[error("learner diverged at slot {slot}: non-finite parameter or throughput estimate")]
    Divergence { slot: u64 },

    #[error("recurrent state {state} not visited within {cap} slots")]
    RecurrenceViolation { state: State, cap: u64 },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
