use crate::env::{Action, StateSpace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stationary policy table: a distribution over the four actions for each state index.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T> {
    probs: Vec<[T; 4]>,
}

impl<T: Scalar> Policy<T> {
    pub fn from_probs(probs: Vec<[T; 4]>) -> Self {
        Self { probs }
    }

    pub fn deterministic(actions: &[Action]) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = [T::zero(); 4];
                row[a.index()] = T::one();
                row
            })
            .collect();
        Self { probs }
    }

    /// Uniform over the feasible set of every state.
    pub fn uniform(space: &StateSpace) -> Self {
        let probs = space
            .states()
            .map(|s| {
                let feasible = space.feasible(s);
                let w = T::one() / T::from_count(feasible.len());
                let mut row = [T::zero(); 4];
                for a in feasible.iter() {
                    row[a.index()] = w;
                }
                row
            })
            .collect();
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self, index: usize) -> &[T; 4] {
        &self.probs[index]
    }

    pub fn prob(&self, index: usize, a: Action) -> T {
        self.probs[index][a.index()]
    }

    /// The action carrying all the mass, if the row is deterministic.
    pub fn action(&self, index: usize) -> Option<Action> {
        let row = &self.probs[index];
        Action::ALL.into_iter().find(|a| row[a.index()] == T::one())
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states()).all(|i| self.action(i).is_some())
    }

    /// Rows sum to one and put no mass outside `Idle` plus the feasible set.
    pub fn validate(&self, space: &StateSpace) -> Result<()> {
        if self.probs.len() != space.len() {
            return Err(Error::InvalidPolicy {
                state_index: self.probs.len().min(space.len()),
                reason: format!("policy has {} rows for {} states", self.probs.len(), space.len()),
            });
        }
        let tol = T::lit(1e-9);
        for (i, row) in self.probs.iter().enumerate() {
            let s = space.state(i);
            let admissible = space.admissible(s);
            let mut total = T::zero();
            for a in Action::ALL {
                let p = row[a.index()];
                if !(p >= T::zero()) {
                    return Err(Error::InvalidPolicy { state_index: i, reason: format!("negative or NaN mass on {a}") });
                }
                if p > T::zero() && !admissible.contains(a) {
                    return Err(Error::InvalidPolicy { state_index: i, reason: format!("mass on infeasible action {a} at {s}") });
                }
                total += p;
            }
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidPolicy { state_index: i, reason: format!("row sums to {total}") });
            }
        }
        Ok(())
    }
}
