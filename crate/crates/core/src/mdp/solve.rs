use crate::env::Action;
use crate::error::{Error, Result};
use crate::mdp::model::TransitionModel;
use crate::mdp::policy::Policy;
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Optimal average-reward solution.
#[derive(Clone, Debug)]
pub struct Solution<T> {
    /// Optimal long-run throughput (data units per slot).
    pub gain: T,
    /// Relative values, anchored so that `bias[0] == 0`.
    pub bias: Vec<T>,
    pub actions: Vec<Action>,
    pub policy: Policy<T>,
    pub iterations: usize,
    /// Span of the last value difference; below the requested tolerance on success.
    pub span: T,
}

/// One-step lookahead `r(s,a) + Σ P(s'|s,a) h(s')`.
fn lookahead<T: Scalar>(model: &TransitionModel<T>, index: usize, action: Action, h: &[T]) -> T {
    let row = model.row(index, action).expect("row exists for admissible action");
    row.next.iter().fold(row.reward, |acc, &(j, p)| acc + p * h[j])
}

fn bellman_max<T: Scalar>(model: &TransitionModel<T>, index: usize, h: &[T]) -> T {
    model
        .feasible_rows(index)
        .map(|r| r.next.iter().fold(r.reward, |acc, &(j, p)| acc + p * h[j]))
        .fold(T::neg_infinity(), T::max)
}

/// Greedy action over the feasible set; near-ties resolve to the lowest action index.
pub fn greedy_action<T: Scalar>(model: &TransitionModel<T>, index: usize, h: &[T]) -> Action {
    let mut best: Option<(Action, T)> = None;
    for row in model.feasible_rows(index) {
        let q = lookahead(model, index, row.action, h);
        match best {
            Some((_, bq)) if q <= bq + T::epsilon() * T::lit(64.0) * (T::one() + bq.abs()) => {}
            _ => best = Some((row.action, q)),
        }
    }
    best.expect("every state has a feasible action").0
}

/// Relative value iteration with span-seminorm stopping.
///
/// Iterates `h ← T h − (T h)(s₀)` until `span(T h − h) < tol`. The returned bias is the
/// iterate whose Bellman difference satisfied the stopping rule, and the gain is the
/// midpoint of that difference's range, so the residual is at most `tol / 2`.
pub fn solve_optimal<T: Scalar>(model: &TransitionModel<T>, tol: T, max_iters: usize) -> Result<Solution<T>> {
    let n = model.n_states();
    let mut h = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut last_span = T::infinity();
    for iteration in 1..=max_iters {
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for (i, slot) in next.iter_mut().enumerate() {
            let v = bellman_max(model, i, &h);
            let d = v - h[i];
            lo = lo.min(d);
            hi = hi.max(d);
            *slot = v;
        }
        last_span = hi - lo;
        if last_span < tol {
            let actions: Vec<Action> = (0..n).map(|i| greedy_action(model, i, &h)).collect();
            return Ok(Solution {
                gain: (hi + lo) / T::lit(2.0),
                policy: Policy::deterministic(&actions),
                actions,
                bias: h,
                iterations: iteration,
                span: last_span,
            });
        }
        let anchor = next[0];
        for (hv, nv) in h.iter_mut().zip(&next) {
            *hv = *nv - anchor;
        }
    }
    Err(Error::NonConvergence { iterations: max_iters, last_span: last_span.to_f64_lossy() })
}

/// `max_s |(T h)(s) − h(s) − g|` for the optimal operator `T`.
pub fn bellman_residual<T: Scalar>(model: &TransitionModel<T>, bias: &[T], gain: T) -> T {
    (0..model.n_states())
        .map(|i| (bellman_max(model, i, bias) - bias[i] - gain).abs())
        .fold(T::zero(), T::max)
}
