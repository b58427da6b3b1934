//! Comparison policies and the trajectory runner.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::env::{Action, EnvParams, Environment, Simulator, State, StateSpace};
use crate::error::{Error, Result};
use crate::learner::PolicyParams;
use crate::mdp::Policy;
use crate::metrics::{rng_from_seed, MetricsAccumulator, RunMetrics};
use crate::scalar::Scalar;

/// Anything that maps a state to an action, possibly at random.
///
/// `u` is a uniform draw on `[0, 1)` supplied by the runner every slot, so deterministic
/// and stochastic sources consume the random stream identically.
pub trait PolicySource: Sync {
    fn choose(&self, space: &StateSpace, s: State, u: f64) -> Action;
}

/// Harvest-then-transmit: harvest while the channel is busy, transmit when it is idle.
pub fn htt_policy<T: Scalar>(s: State, params: &EnvParams<T>) -> Action {
    htt_action(&params.space(), s)
}

fn htt_action(space: &StateSpace, s: State) -> Action {
    if s.is_busy() {
        if s.energy < space.max_energy {
            Action::Harvest
        } else {
            Action::Idle
        }
    } else if space.feasible(s).contains(Action::Transmit) {
        Action::Transmit
    } else {
        Action::Idle
    }
}

/// Pure backscatter: backscatter whenever the channel is busy and data is queued.
pub fn backscatter_policy<T: Scalar>(s: State, params: &EnvParams<T>) -> Action {
    backscatter_action(&params.space(), s, false)
}

fn backscatter_action(space: &StateSpace, s: State, harvest_when_empty: bool) -> Action {
    if !s.is_busy() {
        Action::Idle
    } else if s.data >= space.d_b {
        Action::Backscatter
    } else if harvest_when_empty && s.energy < space.max_energy {
        Action::Harvest
    } else {
        Action::Idle
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Htt,
    /// `harvest_when_empty` harvests instead of idling when the busy channel finds too
    /// little data to backscatter.
    Backscatter { harvest_when_empty: bool },
    /// Uniform over the feasible set.
    Random,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Htt => "htt",
            Baseline::Backscatter { .. } => "backscatter",
            Baseline::Random => "random",
        }
    }

    pub fn action(&self, space: &StateSpace, s: State, u: f64) -> Action {
        match *self {
            Baseline::Htt => htt_action(space, s),
            Baseline::Backscatter { harvest_when_empty } => backscatter_action(space, s, harvest_when_empty),
            Baseline::Random => {
                let set = space.feasible(s);
                let k = ((u * set.len() as f64) as usize).min(set.len() - 1);
                set.iter().nth(k).unwrap()
            }
        }
    }

    /// Stationary policy table for exact evaluation.
    pub fn table<T: Scalar>(&self, space: &StateSpace) -> Policy<T> {
        match self {
            Baseline::Random => Policy::uniform(space),
            _ => {
                let actions: Vec<Action> = space.states().map(|s| self.action(space, s, 0.0)).collect();
                Policy::deterministic(&actions)
            }
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "htt" => Ok(Baseline::Htt),
            "backscatter" => Ok(Baseline::Backscatter { harvest_when_empty: false }),
            "random" => Ok(Baseline::Random),
            other => Err(format!("unknown baseline `{other}`")),
        }
    }
}

impl PolicySource for Baseline {
    fn choose(&self, space: &StateSpace, s: State, u: f64) -> Action {
        self.action(space, s, u)
    }
}

/// Inverse-CDF draw from a probability row.
fn sample_row<T: Scalar>(row: &[T; 4], u: f64) -> Action {
    let mut acc = 0.0;
    let mut last = Action::Idle;
    for a in Action::ALL {
        let p = row[a.index()].to_f64_lossy();
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

impl<T: Scalar> PolicySource for Policy<T> {
    fn choose(&self, space: &StateSpace, s: State, u: f64) -> Action {
        let i = space.index(s).expect("state inside the space");
        sample_row(self.probs(i), u)
    }
}

impl<T: Scalar> PolicySource for PolicyParams<T> {
    fn choose(&self, space: &StateSpace, s: State, u: f64) -> Action {
        let i = space.index(s).expect("state inside the space");
        self.distribution_at(i).sample(u)
    }
}

impl<P: PolicySource + ?Sized> PolicySource for &P {
    fn choose(&self, space: &StateSpace, s: State, u: f64) -> Action {
        (**self).choose(space, s, u)
    }
}

/// Simulates `slots` slots of `policy` from a random channel with empty queue and storage.
pub fn run_trajectory<T: Scalar, P: PolicySource + ?Sized>(
    policy: &P,
    params: &EnvParams<T>,
    slots: u64,
    seed: u64,
) -> Result<RunMetrics> {
    if slots == 0 {
        return Err(Error::Precondition("slots must be at least 1".into()));
    }
    let mut env = Simulator::new(*params)?;
    let space = env.space();
    let mut rng = rng_from_seed(seed);
    let mut acc = MetricsAccumulator::new(slots);
    let mut s = env.reset(&mut rng);
    for _ in 0..slots {
        let a = policy.choose(&space, s, rng.gen());
        let out = env.step(s, a, &mut rng)?;
        acc.record(s, &out);
        s = out.next;
    }
    Ok(acc.finish().with_seed(seed))
}
