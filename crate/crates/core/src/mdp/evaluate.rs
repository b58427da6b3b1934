use crate::env::{Action, Channel, State};
use crate::error::{Error, Result};
use crate::mdp::linalg::{self, Dense};
use crate::mdp::model::TransitionModel;
use crate::mdp::policy::Policy;
use crate::scalar::Scalar;

/// Markov chain induced by a stationary policy.
#[derive(Clone, Debug)]
pub struct InducedChain<T> {
    pub p: Dense<T>,
    pub reward: Vec<T>,
    pub blocking: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct PolicyEvaluation<T> {
    /// Long-run average throughput (data units per slot).
    pub throughput: T,
    pub stationary: Vec<T>,
    /// Stationary mean of the queue length.
    pub avg_queue: T,
    /// Dropped arrivals per offered arrival; zero when `alpha == 0`.
    pub blocking_prob: T,
}

pub fn induced_chain<T: Scalar>(model: &TransitionModel<T>, policy: &Policy<T>) -> Result<InducedChain<T>> {
    policy.validate(model.space())?;
    let n = model.n_states();
    let mut p = Dense::zeros(n);
    let mut reward = vec![T::zero(); n];
    let mut blocking = vec![T::zero(); n];
    for i in 0..n {
        for a in Action::ALL {
            let w = policy.prob(i, a);
            if w == T::zero() {
                continue;
            }
            let row = model.row(i, a).ok_or_else(|| Error::InvalidPolicy {
                state_index: i,
                reason: format!("no model row for {a}"),
            })?;
            reward[i] += w * row.reward;
            blocking[i] += w * row.blocking;
            for &(j, q) in &row.next {
                *p.at(i, j) += w * q;
            }
        }
    }
    Ok(InducedChain { p, reward, blocking })
}

/// States reachable from the empty start `(c, 0, 0)`.
fn reachable_from_start<T: Scalar>(model: &TransitionModel<T>, adj: &[Vec<usize>]) -> Vec<bool> {
    let space = model.space();
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = [Channel::Idle, Channel::Busy]
        .into_iter()
        .map(|c| space.index(State::new(c, 0, 0)).expect("empty state exists"))
        .collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Stationary distribution of the chain restricted to states reachable from the empty start.
///
/// The reachable sub-chain must have exactly one closed class, and that class must be
/// aperiodic. States outside the reachable set get probability zero.
pub fn stationary_distribution<T: Scalar>(model: &TransitionModel<T>, p: &Dense<T>) -> Result<Vec<T>> {
    let n = p.n;
    let adj = linalg::support_graph(p);
    let reach = reachable_from_start(model, &adj);
    let members: Vec<usize> = (0..n).filter(|&i| reach[i]).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in members.iter().enumerate() {
        local[i] = k;
    }
    let sub_adj: Vec<Vec<usize>> = members.iter().map(|&i| adj[i].iter().map(|&j| local[j]).collect()).collect();
    let classes = linalg::closed_classes(&sub_adj);
    if classes.len() != 1 {
        return Err(Error::NotUnichain(format!(
            "{} closed classes reachable from the empty start; a single recurrent class is required",
            classes.len()
        )));
    }
    let period = linalg::period(&sub_adj, &classes[0]);
    if period > 1 {
        return Err(Error::Periodic { period });
    }

    // (Pᵀ − I) π = 0 with the last equation replaced by Σπ = 1.
    let m = members.len();
    let mut a = Dense::zeros(m);
    for (r, &i) in members.iter().enumerate() {
        for (c, &j) in members.iter().enumerate() {
            *a.at(c, r) = p.get(i, j);
        }
    }
    for k in 0..m {
        *a.at(k, k) -= T::one();
    }
    for c in 0..m {
        *a.at(m - 1, c) = T::one();
    }
    let mut b = vec![T::zero(); m];
    b[m - 1] = T::one();
    let sol = linalg::solve(a, b).ok_or_else(|| Error::NotUnichain("stationary system is singular".into()))?;

    let mut pi = vec![T::zero(); n];
    for (k, &i) in members.iter().enumerate() {
        pi[i] = sol[k].max(T::zero());
    }
    let total: T = pi.iter().copied().sum();
    for v in &mut pi {
        *v /= total;
    }
    Ok(pi)
}

pub fn evaluate_policy_exact<T: Scalar>(model: &TransitionModel<T>, policy: &Policy<T>) -> Result<PolicyEvaluation<T>> {
    let chain = induced_chain(model, policy)?;
    let pi = stationary_distribution(model, &chain.p)?;
    Ok(evaluate_with(model, &chain, pi))
}

pub(crate) fn evaluate_with<T: Scalar>(model: &TransitionModel<T>, chain: &InducedChain<T>, pi: Vec<T>) -> PolicyEvaluation<T> {
    let space = model.space();
    let throughput = pi.iter().zip(&chain.reward).map(|(&w, &r)| w * r).sum();
    let avg_queue = pi
        .iter()
        .enumerate()
        .map(|(i, &w)| w * T::from_u32(space.state(i).data).unwrap())
        .sum();
    let alpha = model.params().alpha;
    let blocking_prob = if alpha > T::zero() {
        pi.iter().zip(&chain.blocking).map(|(&w, &b)| w * b).sum::<T>() / alpha
    } else {
        T::zero()
    };
    PolicyEvaluation { throughput, stationary: pi, avg_queue, blocking_prob }
}

/// Asymptotic variance `lim n·Var((1/n) Σ f(X_k))` of a state function's time average,
/// `Σ_i π_i (2 f̃_i g_i − f̃_i²)` with `f̃ = f − πf` and `(I − P + 1π) g = f̃`.
pub fn time_average_variance<T: Scalar>(p: &Dense<T>, pi: &[T], f: &[T]) -> Result<T> {
    let n = p.n;
    let mean: T = pi.iter().zip(f).map(|(&w, &v)| w * v).sum();
    let centered: Vec<T> = f.iter().map(|&v| v - mean).collect();
    let mut a = Dense::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { T::one() } else { T::zero() };
            *a.at(i, j) = delta - p.get(i, j) + pi[j];
        }
    }
    let g = linalg::solve(a, centered.clone()).ok_or_else(|| Error::NotUnichain("fundamental matrix is singular".into()))?;
    Ok((0..n).map(|i| pi[i] * (T::lit(2.0) * centered[i] * g[i] - centered[i] * centered[i])).sum())
}

/// `‖πP − π‖∞`.
pub fn stationarity_error<T: Scalar>(p: &Dense<T>, pi: &[T]) -> T {
    (0..p.n)
        .map(|j| {
            let flow: T = (0..p.n).map(|i| pi[i] * p.get(i, j)).sum();
            (flow - pi[j]).abs()
        })
        .fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_time_average_variance() {
        let (a, b) = (0.2f64, 0.05f64);
        let mut p = Dense::zeros(2);
        *p.at(0, 0) = 1.0 - a;
        *p.at(0, 1) = a;
        *p.at(1, 0) = b;
        *p.at(1, 1) = 1.0 - b;
        let pi = [b / (a + b), a / (a + b)];
        let v = time_average_variance(&p, &pi, &[0.0, 1.0]).unwrap();
        let expected = pi[0] * pi[1] * (2.0 - a - b) / (a + b);
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }
    use crate::env::EnvParams;
    use crate::mdp::model::build_model;

    fn idle_where_feasible(space: &crate::env::StateSpace) -> Vec<Action> {
        space
            .states()
            .map(|s| {
                let f = space.feasible(s);
                if f.contains(Action::Idle) {
                    Action::Idle
                } else {
                    f.iter().next().unwrap()
                }
            })
            .collect()
    }

    #[test]
    fn idle_policy_without_arrivals() {
        let p = EnvParams::<f64> { alpha: 0.0, ..Default::default() };
        let m = build_model(&p).unwrap();
        let policy = Policy::deterministic(&idle_where_feasible(m.space()));
        let ev = evaluate_policy_exact(&m, &policy).unwrap();
        assert_eq!(ev.throughput, 0.0);
        assert_eq!(ev.avg_queue, 0.0);
        assert_eq!(ev.blocking_prob, 0.0);
    }

    #[test]
    fn uniform_policy_stationary_properties() {
        let m = build_model(&EnvParams::<f64>::default()).unwrap();
        let policy = Policy::uniform(m.space());
        let chain = induced_chain(&m, &policy).unwrap();
        let pi = stationary_distribution(&m, &chain.p).unwrap();
        assert!(pi.iter().all(|&x| x >= 0.0));
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(stationarity_error(&chain.p, &pi) <= 1e-10);
    }

    #[test]
    fn periodic_chain_rejected() {
        // eta = 0 keeps the channel busy; with alpha = 1 and a deterministic harvest/idle
        // alternation we get a cycle; build one by hand instead: energy toggles 0 <-> 1.
        let p = EnvParams::<f64> {
            alpha: 0.0,
            eta: 0.0,
            gamma: 1.0,
            max_data: 1,
            max_energy: 1,
            d_t: 1,
            ..Default::default()
        };
        let mut m = build_model(&p).unwrap();
        let sp = *m.space();
        let a = sp.index(State::busy(0, 0)).unwrap();
        let b = sp.index(State::busy(0, 1)).unwrap();
        use crate::mdp::model::ActionRow;
        m.set_row(b, ActionRow { action: Action::Idle, feasible: true, reward: 0.0, blocking: 0.0, next: vec![(a, 1.0)] });
        let mut actions = idle_where_feasible(&sp);
        actions[a] = Action::Harvest;
        let idle0 = sp.index(State::idle(0, 0)).unwrap();
        m.set_row(idle0, ActionRow { action: Action::Idle, feasible: true, reward: 0.0, blocking: 0.0, next: vec![(a, 1.0)] });
        match evaluate_policy_exact(&m, &Policy::deterministic(&actions)) {
            Err(Error::Periodic { period: 2 }) => {}
            other => panic!("expected periodic error, got {other:?}"),
        }
    }

    #[test]
    fn multichain_rejected() {
        let p = EnvParams::<f64> { alpha: 0.0, eta: 0.0, gamma: 1.0, ..Default::default() };
        let mut m = build_model(&p).unwrap();
        let sp = *m.space();
        // Split the empty start into two absorbing states.
        use crate::mdp::model::ActionRow;
        let busy0 = sp.index(State::busy(0, 0)).unwrap();
        let idle0 = sp.index(State::idle(0, 0)).unwrap();
        let stay = |i| ActionRow { action: Action::Idle, feasible: true, reward: 0.0, blocking: 0.0, next: vec![(i, 1.0)] };
        m.set_row(busy0, stay(busy0));
        m.set_row(idle0, stay(idle0));
        let actions = vec![Action::Idle; sp.len()];
        assert!(matches!(
            evaluate_policy_exact(&m, &Policy::deterministic(&actions)),
            Err(Error::NotUnichain(_))
        ));
    }
}
