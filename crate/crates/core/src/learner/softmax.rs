use std::ops::Range;

use crate::env::{Action, State, StateSpace};
use crate::error::{Error, Result};
use crate::mdp::Policy;
use crate::scalar::Scalar;

/// Position of each (state, feasible action) parameter in the flat vector.
///
/// Parameters of state `i` occupy `offsets[i]..offsets[i + 1]`, in action order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    space: StateSpace,
    offsets: Vec<usize>,
    actions: Vec<Action>,
}

impl ParamLayout {
    pub fn new(space: &StateSpace) -> Self {
        let mut offsets = Vec::with_capacity(space.len() + 1);
        let mut actions = Vec::new();
        offsets.push(0);
        for s in space.states() {
            actions.extend(space.feasible(s).iter());
            offsets.push(actions.len());
        }
        Self { space: *space, offsets, actions }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.actions.len()
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block(&self, state_index: usize) -> Range<usize> {
        self.offsets[state_index]..self.offsets[state_index + 1]
    }

    pub fn actions(&self, state_index: usize) -> &[Action] {
        &self.actions[self.block(state_index)]
    }

    pub fn position(&self, state_index: usize, a: Action) -> Option<usize> {
        let block = self.block(state_index);
        self.actions[block.clone()].iter().position(|&b| b == a).map(|k| block.start + k)
    }

    /// (state index, action) of a flat parameter position.
    pub fn entry(&self, position: usize) -> (usize, Action) {
        let state_index = self.offsets.partition_point(|&o| o <= position) - 1;
        (state_index, self.actions[position])
    }
}

/// Softmax preference vector, one entry per feasible (state, action) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<T> {
    layout: ParamLayout,
    theta: Vec<T>,
}

/// Distribution over a state's feasible actions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDistribution<T> {
    actions: [Action; 4],
    probs: [T; 4],
    len: usize,
}

impl<T: Scalar> ActionDistribution<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Action, T)> + '_ {
        self.actions[..self.len].iter().copied().zip(self.probs[..self.len].iter().copied())
    }

    pub fn prob(&self, a: Action) -> T {
        self.iter().find(|&(b, _)| b == a).map_or(T::zero(), |(_, p)| p)
    }

    /// Inverse-CDF draw from a uniform `u ∈ [0, 1)`.
    pub fn sample(&self, u: f64) -> Action {
        let mut cum = 0.0;
        for (a, p) in self.iter() {
            cum += p.to_f64_lossy();
            if u < cum {
                return a;
            }
        }
        self.actions[self.len - 1]
    }
}

/// Sparse gradient of `log χ(s, a)`: nonzero only on the parameters of state `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreVector<T> {
    pub offset: usize,
    values: [T; 4],
    len: usize,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn values(&self) -> &[T] {
        &self.values[..self.len]
    }

    /// (flat position, value) pairs.
    pub fn entries(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.values().iter().enumerate().map(move |(k, &v)| (self.offset + k, v))
    }

    pub fn to_dense(&self, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        for (i, v) in self.entries() {
            out[i] = v;
        }
        out
    }
}

impl<T: Scalar> PolicyParams<T> {
    /// All-zero preferences: uniform over every feasible set.
    pub fn zeros(space: &StateSpace) -> Self {
        let layout = ParamLayout::new(space);
        let theta = vec![T::zero(); layout.dim()];
        Self { layout, theta }
    }

    pub fn from_vec(layout: ParamLayout, theta: Vec<T>) -> Result<Self> {
        if theta.len() != layout.dim() {
            return Err(Error::Precondition(format!(
                "parameter vector has {} entries, layout needs {}",
                theta.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, theta })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn space(&self) -> &StateSpace {
        self.layout.space()
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn get(&self, state_index: usize, a: Action) -> Option<T> {
        self.layout.position(state_index, a).map(|i| self.theta[i])
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    /// Softmax over the feasible actions of state `state_index`, with max-subtraction.
    pub fn distribution_at(&self, state_index: usize) -> ActionDistribution<T> {
        let block = self.layout.block(state_index);
        let prefs = &self.theta[block.clone()];
        let acts = &self.layout.actions[block];
        let max = prefs.iter().copied().fold(T::neg_infinity(), T::max);
        let mut probs = [T::zero(); 4];
        let mut actions = [Action::Idle; 4];
        let mut total = T::zero();
        for (k, (&p, &a)) in prefs.iter().zip(acts).enumerate() {
            probs[k] = (p - max).exp();
            actions[k] = a;
            total += probs[k];
        }
        for p in &mut probs[..prefs.len()] {
            *p /= total;
        }
        ActionDistribution { actions, probs, len: prefs.len() }
    }

    /// `∇θ log χ(s, a)`: `1 − χ(s, a)` at `(s, a)` and `−χ(s, a')` at the other feasible `a'`.
    pub fn score_at(&self, state_index: usize, a: Action) -> Result<ScoreVector<T>> {
        let block = self.layout.block(state_index);
        let dist = self.distribution_at(state_index);
        if !dist.iter().any(|(b, _)| b == a) {
            return Err(Error::InfeasibleAction { state: self.layout.space.state(state_index), action: a });
        }
        let mut values = [T::zero(); 4];
        for (k, (b, p)) in dist.iter().enumerate() {
            values[k] = if b == a { T::one() - p } else { -p };
        }
        Ok(ScoreVector { offset: block.start, values, len: dist.len() })
    }

    /// Tabulates the randomized policy.
    pub fn to_policy(&self) -> Policy<T> {
        let probs = (0..self.layout.n_states())
            .map(|i| {
                let mut row = [T::zero(); 4];
                for (a, p) in self.distribution_at(i).iter() {
                    row[a.index()] = p;
                }
                row
            })
            .collect();
        Policy::from_probs(probs)
    }
}

pub fn action_distribution<T: Scalar>(theta: &PolicyParams<T>, s: State) -> Result<ActionDistribution<T>> {
    Ok(theta.distribution_at(theta.space().index(s)?))
}

pub fn score_vector<T: Scalar>(theta: &PolicyParams<T>, s: State, a: Action) -> Result<ScoreVector<T>> {
    theta.score_at(theta.space().index(s)?, a)
}
