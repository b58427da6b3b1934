use crate::env::{self, Action, EnvParams, State, StateSpace};
use crate::error::Result;
use crate::scalar::Scalar;

/// One (state, action) pair of the exact model.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionRow<T> {
    pub action: Action,
    /// Listed by the feasibility table; `false` only for the extra `Idle` rows.
    pub feasible: bool,
    pub reward: T,
    /// Per-slot probability that an arrival is dropped.
    pub blocking: T,
    /// Sparse next-state distribution as (state index, probability).
    pub next: Vec<(usize, T)>,
}

/// Exact transition probabilities and expected rewards for every admissible (state, action).
#[derive(Clone, Debug)]
pub struct TransitionModel<T> {
    params: EnvParams<T>,
    space: StateSpace,
    rows: Vec<Vec<ActionRow<T>>>,
}

impl<T: Scalar> TransitionModel<T> {
    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn params(&self) -> &EnvParams<T> {
        &self.params
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn state(&self, index: usize) -> State {
        self.space.state(index)
    }

    /// All admissible rows of a state, in action order.
    pub fn rows(&self, index: usize) -> &[ActionRow<T>] {
        &self.rows[index]
    }

    pub fn row(&self, index: usize, a: Action) -> Option<&ActionRow<T>> {
        self.rows[index].iter().find(|r| r.action == a)
    }

    pub fn feasible_rows(&self, index: usize) -> impl Iterator<Item = &ActionRow<T>> {
        self.rows[index].iter().filter(|r| r.feasible)
    }

    /// Replaces a row's distribution; for hand-built toy models in tests.
    #[doc(hidden)]
    pub fn set_row(&mut self, index: usize, row: ActionRow<T>) {
        match self.rows[index].iter_mut().find(|r| r.action == row.action) {
            Some(slot) => *slot = row,
            None => {
                self.rows[index].push(row);
                self.rows[index].sort_by_key(|r| r.action);
            }
        }
    }
}

/// Builds the exact model from the environment's transition distribution.
pub fn build_model<T: Scalar>(params: &EnvParams<T>) -> Result<TransitionModel<T>> {
    params.validate()?;
    let space = params.space();
    let mut rows = Vec::with_capacity(space.len());
    for s in space.states() {
        let feasible = space.feasible(s);
        let mut state_rows = Vec::with_capacity(3);
        for a in space.admissible(s).iter() {
            let mut next = env::transition_distribution(s, a, params)?
                .into_iter()
                .map(|(st, p)| Ok((space.index(st)?, p)))
                .collect::<Result<Vec<_>>>()?;
            next.sort_by_key(|&(j, _)| j);
            state_rows.push(ActionRow {
                action: a,
                feasible: feasible.contains(a),
                reward: env::expected_reward(s, a, params)?,
                blocking: env::blocking_probability(s, a, params)?,
                next,
            });
        }
        rows.push(state_rows);
    }
    Ok(TransitionModel { params: *params, space, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_model_is_stochastic() {
        let m = build_model(&EnvParams::<f64>::default()).unwrap();
        assert_eq!(m.n_states(), 242);
        for i in 0..m.n_states() {
            assert!(m.feasible_rows(i).count() >= 1);
            for r in m.rows(i) {
                let total: f64 = r.next.iter().map(|x| x.1).sum();
                assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn harvest_entry() {
        let p = EnvParams::<f64>::default();
        let m = build_model(&p).unwrap();
        let sp = p.space();
        let row = m.row(sp.index(State::busy(3, 2)).unwrap(), Action::Harvest).unwrap();
        let target = sp.index(State::busy(4, 3)).unwrap();
        let mass = row.next.iter().find(|x| x.0 == target).unwrap().1;
        assert_relative_eq!(mass, 0.225, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_backscatter() {
        let p = EnvParams::<f64> { alpha: 0.0, eta: 0.0, beta: 1.0, ..Default::default() };
        let m = build_model(&p).unwrap();
        let sp = p.space();
        let row = m.row(sp.index(State::busy(1, 0)).unwrap(), Action::Backscatter).unwrap();
        assert_eq!(row.next, vec![(sp.index(State::busy(0, 0)).unwrap(), 1.0)]);
    }

    #[test]
    fn rows_exist_for_feasible_pairs_and_idle() {
        let p = EnvParams::<f64>::default();
        let m = build_model(&p).unwrap();
        for (i, s) in p.space().states().enumerate() {
            let feasible: Vec<_> = m.feasible_rows(i).map(|r| r.action).collect();
            assert_eq!(feasible, p.space().feasible(s).iter().collect::<Vec<_>>());
            assert!(m.row(i, Action::Idle).is_some());
        }
    }
}
