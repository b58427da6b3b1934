//! Exact MDP: model construction, average-reward optimal control and stationary analysis.

pub mod evaluate;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod solve;

pub use evaluate::{evaluate_policy_exact, induced_chain, stationary_distribution, stationarity_error, time_average_variance, InducedChain, PolicyEvaluation};
pub use model::{build_model, ActionRow, TransitionModel};
pub use policy::Policy;
pub use solve::{bellman_residual, solve_optimal, Solution, DEFAULT_MAX_ITERS, DEFAULT_TOL};
