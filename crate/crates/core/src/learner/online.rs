use rand::{Rng, RngCore};

use crate::env::{Action, Environment, State};
use crate::error::{Error, Result};
use crate::learner::schedule::StepSchedule;
use crate::learner::softmax::PolicyParams;
use crate::metrics::{MetricsAccumulator, RunMetrics};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub schedule: StepSchedule,
    /// Relative step of the throughput estimate.
    pub nu: f64,
    /// Regeneration state; `None` picks the most visited state of the first
    /// `s_star_window` slots (lowest index on ties).
    pub s_star: Option<State>,
    pub s_star_window: u64,
    /// Learning-curve sampling period in slots.
    pub curve_stride: u64,
    /// Longest allowed gap between visits to the regeneration state (cycle-based learner).
    pub recurrence_cap: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            nu: 0.01,
            s_star: None,
            s_star_window: 1000,
            curve_stride: 1000,
            recurrence_cap: 1_000_000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate().map_err(Error::Precondition)?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Precondition(format!("nu must be positive, got {}", self.nu)));
        }
        if self.curve_stride == 0 {
            return Err(Error::Precondition("curve stride must be at least 1".into()));
        }
        if self.s_star.is_none() && self.s_star_window == 0 {
            return Err(Error::Precondition("s_star window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState<T> {
    pub theta: PolicyParams<T>,
    /// Eligibility trace: sum of score vectors since the last regeneration.
    pub z: Vec<T>,
    /// Running estimate of the average throughput.
    pub xi_hat: T,
    /// Step size for the next update.
    pub rho: T,
    pub nu: T,
    pub recurrent_state: Option<State>,
    pub slot_count: u64,
    /// Number of visits to the regeneration state.
    pub visit_count: u64,
    /// Visit counts per state index while the regeneration state is being chosen.
    pub(crate) candidate_visits: Vec<u64>,
    pub(crate) s_star_window: u64,
}

impl<T: Scalar> LearnerState<T> {
    fn new(theta: PolicyParams<T>, config: &LearnerConfig) -> Self {
        let dim = theta.layout().dim();
        Self {
            theta,
            z: vec![T::zero(); dim],
            xi_hat: T::zero(),
            rho: T::lit(config.schedule.rate(0)),
            nu: T::lit(config.nu),
            recurrent_state: config.s_star,
            slot_count: 0,
            visit_count: 0,
            candidate_visits: Vec::new(),
            s_star_window: config.s_star_window,
        }
    }

    /// The regeneration state, designated from visit counts once the selection window
    /// has closed. Called once per slot before `slot_count` advances.
    pub(crate) fn regeneration_state(&mut self, index: usize) -> Option<State> {
        if self.recurrent_state.is_none() {
            if self.candidate_visits.is_empty() {
                self.candidate_visits = vec![0; self.theta.layout().n_states()];
            }
            self.candidate_visits[index] += 1;
            if self.slot_count + 1 >= self.s_star_window {
                let best = (0..self.candidate_visits.len())
                    .fold(0, |b, i| if self.candidate_visits[i] > self.candidate_visits[b] { i } else { b });
                self.recurrent_state = Some(self.theta.space().state(best));
                self.candidate_visits = Vec::new();
            }
        }
        self.recurrent_state
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub slot: u64,
    pub xi_hat: f64,
    /// Delivered units per slot since the start of learning.
    pub empirical_avg_throughput: f64,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct LearningRun<T> {
    pub state: LearnerState<T>,
    pub curve: Vec<CurvePoint>,
    /// Statistics of the learning trajectory itself (seed left at 0 for the caller to stamp).
    pub metrics: RunMetrics,
}

/// Per-slot policy-gradient learner with an eligibility trace that resets at the
/// regeneration state.
#[derive(Clone, Debug)]
pub struct OnlineLearner<T> {
    state: LearnerState<T>,
    schedule: StepSchedule,
    /// State indices whose trace block may be nonzero.
    traced: Vec<usize>,
    in_trace: Vec<bool>,
}

impl<T: Scalar> OnlineLearner<T> {
    pub fn new(theta0: PolicyParams<T>, config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        if let Some(s) = config.s_star {
            theta0.space().index(s)?;
        }
        let n = theta0.layout().n_states();
        Ok(Self {
            state: LearnerState::new(theta0, config),
            schedule: config.schedule,
            traced: Vec::new(),
            in_trace: vec![false; n],
        })
    }

    pub fn state(&self) -> &LearnerState<T> {
        &self.state
    }

    pub fn into_state(self) -> LearnerState<T> {
        self.state
    }

    pub fn choose<R: Rng + ?Sized>(&self, s: State, rng: &mut R) -> Result<Action> {
        let i = self.state.theta.space().index(s)?;
        Ok(self.state.theta.distribution_at(i).sample(rng.gen()))
    }

    /// Applies one update for the slot `(s_k, a_k)` that delivered `reward` units.
    pub fn observe(&mut self, s: State, a: Action, reward: T) -> Result<()> {
        let st = &mut self.state;
        let layout = st.theta.layout().clone();
        let i = layout.space().index(s)?;
        let score = st.theta.score_at(i, a)?;

        if st.regeneration_state(i) == Some(s) {
            st.visit_count += 1;
            for &j in &self.traced {
                for k in layout.block(j) {
                    st.z[k] = T::zero();
                }
                self.in_trace[j] = false;
            }
            self.traced.clear();
        }
        if !self.in_trace[i] {
            self.in_trace[i] = true;
            self.traced.push(i);
        }
        for (k, v) in score.entries() {
            st.z[k] += v;
        }

        let delta = reward - st.xi_hat;
        let step = st.rho * delta;
        let theta = st.theta.theta_mut();
        for &j in &self.traced {
            for k in layout.block(j) {
                theta[k] += step * st.z[k];
            }
        }
        st.xi_hat += st.nu * step;
        st.slot_count += 1;
        st.rho = T::lit(self.schedule.rate(st.slot_count));

        let finite = st.xi_hat.is_finite()
            && self.traced.iter().all(|&j| layout.block(j).all(|k| st.theta.theta()[k].is_finite()));
        if !finite {
            return Err(Error::Divergence { slot: st.slot_count - 1 });
        }
        Ok(())
    }
}

/// Runs the per-slot learner for `total_slots` slots from the environment's initial state.
pub fn learn_online<T: Scalar, E: Environment + ?Sized>(
    env: &mut E,
    theta0: PolicyParams<T>,
    config: &LearnerConfig,
    total_slots: u64,
    rng: &mut dyn RngCore,
) -> Result<LearningRun<T>> {
    if total_slots == 0 {
        return Err(Error::Precondition("total_slots must be at least 1".into()));
    }
    if theta0.space() != &env.space() {
        return Err(Error::Precondition("parameter layout does not match the environment".into()));
    }
    let mut learner = OnlineLearner::new(theta0, config)?;
    let mut metrics = MetricsAccumulator::new(total_slots);
    let mut curve = Vec::with_capacity((total_slots / config.curve_stride) as usize + 1);
    let mut s = env.reset(rng);
    for k in 1..=total_slots {
        let a = learner.choose(s, rng)?;
        let outcome = env.step(s, a, rng)?;
        learner.observe(s, a, T::from_u32(outcome.throughput).unwrap())?;
        metrics.record(s, &outcome);
        s = outcome.next;
        if k % config.curve_stride == 0 || k == total_slots {
            curve.push(CurvePoint {
                slot: k,
                xi_hat: learner.state.xi_hat.to_f64_lossy(),
                empirical_avg_throughput: metrics.running_throughput(),
                rho: learner.state.rho.to_f64_lossy(),
            });
        }
    }
    Ok(LearningRun { state: learner.into_state(), curve, metrics: metrics.finish() })
}
