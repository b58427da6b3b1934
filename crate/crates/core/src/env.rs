//! Slotted dynamics of the secondary transmitter.
//!
//! A state is the triple (channel, queued data units, stored energy units). Each slot
//! resolves in a fixed order:
//!
//! 1. the chosen action (transmit / backscatter / harvest / idle) succeeds or fails,
//! 2. at most one data unit arrives and is dropped if the queue is already full,
//! 3. the primary channel is redrawn i.i.d. (idle with probability `eta`).
//!
//! [`feasible_actions`] is the action set the optimizer and the learner choose from.
//! `Idle` is additionally executable everywhere (see [`StateSpace::admissible`]) so that
//! fixed heuristic policies, which idle in a few states where the feasible set does not
//! list it, can be simulated and evaluated on the same dynamics.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Idle = 0,
    Busy = 1,
}

impl Channel {
    pub fn flag(self) -> u8 {
        self as u8
    }

    pub fn from_flag(c: u8) -> Option<Self> {
        match c {
            0 => Some(Channel::Idle),
            1 => Some(Channel::Busy),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub channel: Channel,
    pub data: u32,
    pub energy: u32,
}

impl State {
    pub fn new(channel: Channel, data: u32, energy: u32) -> Self {
        Self { channel, data, energy }
    }

    pub fn busy(data: u32, energy: u32) -> Self {
        Self::new(Channel::Busy, data, energy)
    }

    pub fn idle(data: u32, energy: u32) -> Self {
        Self::new(Channel::Idle, data, energy)
    }

    pub fn is_busy(&self) -> bool {
        self.channel == Channel::Busy
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(c={},d={},e={})", self.channel.flag(), self.data, self.energy)
    }
}

/// The four actions, numbered 1..=4 as idle, transmit, harvest, backscatter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Idle = 1,
    Transmit = 2,
    Harvest = 3,
    Backscatter = 4,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Idle, Action::Transmit, Action::Harvest, Action::Backscatter];

    /// Zero-based position, used for fixed-size per-action arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Idle => "idle",
            Action::Transmit => "transmit",
            Action::Harvest => "harvest",
            Action::Backscatter => "backscatter",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Small bitset of actions; iterates in action-index order.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn of(actions: &[Action]) -> Self {
        actions.iter().fold(Self::EMPTY, |set, &a| set.with(a))
    }

    pub fn with(self, a: Action) -> Self {
        ActionSet(self.0 | (1 << a.index()))
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |&a| self.contains(a))
    }
}

impl fmt::Debug for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Integer structure of the model: capacities and per-action quanta.
///
/// This is everything needed to enumerate states and decide feasibility, and nothing
/// about the environment's probabilities. The learner only ever sees this.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StateSpace {
    pub max_data: u32,
    pub max_energy: u32,
    pub d_t: u32,
    pub d_b: u32,
    pub e_t: u32,
    pub e_h: u32,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        2 * self.per_channel()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn per_channel(&self) -> usize {
        (self.max_data as usize + 1) * (self.max_energy as usize + 1)
    }

    pub fn contains(&self, s: State) -> bool {
        s.data <= self.max_data && s.energy <= self.max_energy
    }

    /// Canonical index: channel-major, then data, then energy.
    pub fn index(&self, s: State) -> Result<usize> {
        if !self.contains(s) {
            return Err(Error::StateOutOfRange { state: s });
        }
        let e_span = self.max_energy as usize + 1;
        Ok(s.channel.flag() as usize * self.per_channel() + s.data as usize * e_span + s.energy as usize)
    }

    pub fn state(&self, index: usize) -> State {
        assert!(index < self.len(), "state index {index} out of range");
        let e_span = self.max_energy as usize + 1;
        let channel = if index >= self.per_channel() { Channel::Busy } else { Channel::Idle };
        let rem = index % self.per_channel();
        State::new(channel, (rem / e_span) as u32, (rem % e_span) as u32)
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(move |i| self.state(i))
    }

    /// Actions allowed by the queue/energy/channel conditions at `s`.
    pub fn feasible(&self, s: State) -> ActionSet {
        let set = match s.channel {
            Channel::Idle if s.data >= self.d_t && s.energy >= self.e_t => {
                ActionSet::of(&[Action::Idle, Action::Transmit])
            }
            Channel::Idle => ActionSet::of(&[Action::Idle]),
            Channel::Busy => match (s.data >= self.d_b, s.energy < self.max_energy) {
                (false, true) => ActionSet::of(&[Action::Harvest]),
                (false, false) => ActionSet::of(&[Action::Idle]),
                (true, false) => ActionSet::of(&[Action::Backscatter]),
                (true, true) => ActionSet::of(&[Action::Harvest, Action::Backscatter]),
            },
        };
        debug_assert!(!set.is_empty());
        set
    }

    /// Feasible actions plus `Idle`, which is physically executable in every state.
    pub fn admissible(&self, s: State) -> ActionSet {
        self.feasible(s).with(Action::Idle)
    }

    fn check(&self, s: State, a: Action) -> Result<()> {
        if !self.contains(s) {
            return Err(Error::StateOutOfRange { state: s });
        }
        if !self.admissible(s).contains(a) {
            return Err(Error::InfeasibleAction { state: s, action: a });
        }
        Ok(())
    }
}

/// Environment probabilities, quanta and capacities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvParams<T> {
    /// Packet (one data unit) arrival probability per slot.
    pub alpha: T,
    /// Probability the primary channel is idle in a slot.
    pub eta: T,
    /// Backscatter success probability.
    pub beta: T,
    /// Harvest success probability.
    pub gamma: T,
    /// Active transmission success probability.
    pub sigma: T,
    pub d_b: u32,
    pub d_t: u32,
    pub e_h: u32,
    pub e_t: u32,
    /// Data queue capacity `D`.
    pub max_data: u32,
    /// Energy storage capacity `E`.
    pub max_energy: u32,
}

impl<T: Scalar> Default for EnvParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.5),
            eta: T::lit(0.5),
            beta: T::lit(0.9),
            gamma: T::lit(0.9),
            sigma: T::lit(0.9),
            d_b: 1,
            d_t: 2,
            e_h: 1,
            e_t: 1,
            max_data: 10,
            max_energy: 10,
        }
    }
}

impl<T: Scalar> EnvParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
        ] {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidParams { name, reason: format!("{p} out of [0,1]") });
            }
        }
        let quanta = [
            ("d_t", self.d_t, "D", self.max_data),
            ("d_b", self.d_b, "D", self.max_data),
            ("e_t", self.e_t, "E", self.max_energy),
            ("e_h", self.e_h, "E", self.max_energy),
        ];
        for (name, q, cap_name, cap) in quanta {
            if q < 1 || q > cap {
                return Err(Error::InvalidParams {
                    name,
                    reason: format!("{q} must satisfy 1 <= {name} <= {cap_name} = {cap}"),
                });
            }
        }
        Ok(())
    }

    pub fn space(&self) -> StateSpace {
        StateSpace {
            max_data: self.max_data,
            max_energy: self.max_energy,
            d_t: self.d_t,
            d_b: self.d_b,
            e_t: self.e_t,
            e_h: self.e_h,
        }
    }

    /// Probability that the action's own effect (delivery or harvest) happens.
    pub fn success_probability(&self, a: Action) -> T {
        match a {
            Action::Idle => T::one(),
            Action::Transmit => self.sigma,
            Action::Harvest => self.gamma,
            Action::Backscatter => self.beta,
        }
    }

    /// Same model in another scalar type.
    pub fn cast<U: Scalar>(&self) -> EnvParams<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        EnvParams {
            alpha: c(self.alpha),
            eta: c(self.eta),
            beta: c(self.beta),
            gamma: c(self.gamma),
            sigma: c(self.sigma),
            d_b: self.d_b,
            d_t: self.d_t,
            e_h: self.e_h,
            e_t: self.e_t,
            max_data: self.max_data,
            max_energy: self.max_energy,
        }
    }
}

/// Realized result of one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotOutcome {
    pub next: State,
    /// Data units delivered this slot.
    pub throughput: u32,
    pub arrived: bool,
    /// The arrival was dropped because the queue was full after the action.
    pub blocked: bool,
    pub action_succeeded: bool,
}

/// The three independent Bernoulli draws that determine a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotDraws {
    pub success: bool,
    pub arrival: bool,
    pub busy_next: bool,
}

impl SlotDraws {
    /// Consumes exactly three uniforms (success, arrival, channel) regardless of the action.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(a: Action, params: &EnvParams<T>, rng: &mut R) -> Self {
        let u_success: f64 = rng.gen();
        let u_arrival: f64 = rng.gen();
        let u_channel: f64 = rng.gen();
        SlotDraws {
            success: u_success < params.success_probability(a).to_f64_lossy(),
            arrival: u_arrival < params.alpha.to_f64_lossy(),
            busy_next: u_channel >= params.eta.to_f64_lossy(),
        }
    }
}

/// All `2·(D+1)·(E+1)` states in canonical (channel, data, energy) order.
pub fn enumerate_states<T: Scalar>(params: &EnvParams<T>) -> Vec<State> {
    params.space().states().collect()
}

pub fn feasible_actions<T: Scalar>(s: State, params: &EnvParams<T>) -> ActionSet {
    params.space().feasible(s)
}

/// Expected data units delivered by taking `a` in `s`.
pub fn expected_reward<T: Scalar>(s: State, a: Action, params: &EnvParams<T>) -> Result<T> {
    params.space().check(s, a)?;
    Ok(match a {
        Action::Transmit => params.sigma * T::from_u32(params.d_t).unwrap(),
        Action::Backscatter => params.beta * T::from_u32(params.d_b).unwrap(),
        Action::Idle | Action::Harvest => T::zero(),
    })
}

/// Deterministic slot resolution for given draws.
pub fn step_with<T: Scalar>(s: State, a: Action, params: &EnvParams<T>, draws: SlotDraws) -> Result<SlotOutcome> {
    params.space().check(s, a)?;
    let mut data = s.data;
    let mut energy = s.energy;
    let mut throughput = 0;
    let succeeded = match a {
        Action::Idle => false,
        Action::Transmit => {
            energy -= params.e_t;
            if draws.success {
                data -= params.d_t;
                throughput = params.d_t;
            }
            draws.success
        }
        Action::Backscatter => {
            if draws.success {
                data -= params.d_b;
                throughput = params.d_b;
            }
            draws.success
        }
        Action::Harvest => {
            if draws.success {
                energy = (energy + params.e_h).min(params.max_energy);
            }
            draws.success
        }
    };
    let mut blocked = false;
    if draws.arrival {
        if data >= params.max_data {
            blocked = true;
        } else {
            data += 1;
        }
    }
    let channel = if draws.busy_next { Channel::Busy } else { Channel::Idle };
    Ok(SlotOutcome {
        next: State::new(channel, data, energy),
        throughput,
        arrived: draws.arrival,
        blocked,
        action_succeeded: succeeded,
    })
}

/// Samples one slot.
pub fn step<T: Scalar, R: Rng + ?Sized>(s: State, a: Action, params: &EnvParams<T>, rng: &mut R) -> Result<SlotOutcome> {
    params.space().check(s, a)?;
    let draws = SlotDraws::sample(a, params, rng);
    step_with(s, a, params, draws)
}

/// Enumerates the (at most eight) draw combinations with their probabilities.
fn draw_branches<T: Scalar>(a: Action, params: &EnvParams<T>) -> Vec<(SlotDraws, T)> {
    let p_success = params.success_probability(a);
    let success_branches: &[bool] = if a == Action::Idle { &[false] } else { &[true, false] };
    let mut out = Vec::with_capacity(8);
    for &success in success_branches {
        let ps = if a == Action::Idle { T::one() } else if success { p_success } else { T::one() - p_success };
        for arrival in [true, false] {
            let pa = if arrival { params.alpha } else { T::one() - params.alpha };
            for busy_next in [true, false] {
                let pc = if busy_next { T::one() - params.eta } else { params.eta };
                out.push((SlotDraws { success, arrival, busy_next }, ps * pa * pc));
            }
        }
    }
    out
}

/// Exact next-state distribution; zero-probability states are omitted.
pub fn transition_distribution<T: Scalar>(s: State, a: Action, params: &EnvParams<T>) -> Result<Vec<(State, T)>> {
    params.space().check(s, a)?;
    let mut dist: Vec<(State, T)> = Vec::with_capacity(8);
    for (draws, p) in draw_branches(a, params) {
        if p == T::zero() {
            continue;
        }
        let next = step_with(s, a, params, draws)?.next;
        match dist.iter_mut().find(|(st, _)| *st == next) {
            Some((_, mass)) => *mass += p,
            None => dist.push((next, p)),
        }
    }
    Ok(dist)
}

/// Probability that an arrival is dropped in this slot: `alpha · P[queue full after the action]`.
pub fn blocking_probability<T: Scalar>(s: State, a: Action, params: &EnvParams<T>) -> Result<T> {
    params.space().check(s, a)?;
    Ok(params.alpha * full_after_action(s, a, params))
}

fn full_after_action<T: Scalar>(s: State, a: Action, params: &EnvParams<T>) -> T {
    let data_after_success = match a {
        Action::Transmit => s.data - params.d_t,
        Action::Backscatter => s.data - params.d_b,
        Action::Idle | Action::Harvest => s.data,
    };
    let full = |d: u32| if d >= params.max_data { T::one() } else { T::zero() };
    match a {
        Action::Idle => full(s.data),
        _ => {
            let p = params.success_probability(a);
            p * full(data_after_success) + (T::one() - p) * full(s.data)
        }
    }
}

/// Hooks the learner and trajectory runner use to interact with an environment.
///
/// Implementors expose only the integer [`StateSpace`]; probabilities stay hidden.
pub trait Environment {
    fn space(&self) -> StateSpace;

    /// Initial state: random channel, empty queue, empty storage.
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> State;

    fn step(&mut self, s: State, a: Action, rng: &mut dyn rand::RngCore) -> Result<SlotOutcome>;
}

/// Environment backed by sampled dynamics.
#[derive(Clone, Debug)]
pub struct Simulator<T> {
    params: EnvParams<T>,
}

impl<T: Scalar> Simulator<T> {
    pub fn new(params: EnvParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl<T: Scalar> Environment for Simulator<T> {
    fn space(&self) -> StateSpace {
        self.params.space()
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> State {
        let u: f64 = rng.gen();
        let channel = if u >= self.params.eta.to_f64_lossy() { Channel::Busy } else { Channel::Idle };
        State::new(channel, 0, 0)
    }

    fn step(&mut self, s: State, a: Action, rng: &mut dyn rand::RngCore) -> Result<SlotOutcome> {
        step(s, a, &self.params, rng)
    }
}
