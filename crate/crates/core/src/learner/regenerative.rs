use rand::{Rng, RngCore};

use crate::env::{Action, Environment, State};
use crate::error::{Error, Result};
use crate::learner::online::{CurvePoint, LearnerConfig, LearnerState, LearningRun};
use crate::learner::schedule::StepSchedule;
use crate::learner::softmax::PolicyParams;
use crate::metrics::MetricsAccumulator;
use crate::scalar::Scalar;

/// One slot of a regeneration cycle: (state index, action, delivered units).
pub type CycleSlot<T> = (usize, Action, T);

/// Gradient estimate of one regeneration cycle,
/// `F = Σ_k q̃_k · ∇log χ(s_k, a_k)` with `q̃_k = Σ_{j ≥ k} (r_j − ξ)`.
pub fn cycle_gradient<T: Scalar>(theta: &PolicyParams<T>, cycle: &[CycleSlot<T>], xi: T) -> Result<Vec<T>> {
    let mut grad = vec![T::zero(); theta.layout().dim()];
    let mut tail = T::zero();
    for &(i, a, r) in cycle.iter().rev() {
        tail += r - xi;
        for (k, v) in theta.score_at(i, a)?.entries() {
            grad[k] += tail * v;
        }
    }
    Ok(grad)
}

/// Learner that updates only when a regeneration cycle closes.
#[derive(Clone, Debug)]
pub struct RegenerativeLearner<T> {
    state: LearnerState<T>,
    schedule: StepSchedule,
    cap: u64,
    started: bool,
    cycle: Vec<CycleSlot<T>>,
    waiting: u64,
}

impl<T: Scalar> RegenerativeLearner<T> {
    pub fn new(theta0: PolicyParams<T>, config: &LearnerConfig) -> Result<Self> {
        let online = crate::learner::online::OnlineLearner::new(theta0, config)?;
        let mut state = online.into_state();
        state.z.clear();
        Ok(Self {
            state,
            schedule: config.schedule,
            cap: config.recurrence_cap,
            started: false,
            cycle: Vec::new(),
            waiting: 0,
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

    /// Records one slot; when `next` is the regeneration state the cycle closes and
    /// `θ` and `ξ̃` are updated with the slot-indexed step size of the closing slot.
    pub fn observe(&mut self, s: State, a: Action, reward: T, next: State) -> Result<()> {
        let index = self.state.theta.space().index(s)?;
        let chosen = self.state.regeneration_state(index);
        let slot = self.state.slot_count;
        self.state.slot_count += 1;
        if chosen == Some(s) {
            self.started = true;
        }
        if !self.started {
            if let Some(s_star) = chosen {
                self.waiting += 1;
                if self.waiting > self.cap {
                    return Err(Error::RecurrenceViolation { state: s_star, cap: self.cap });
                }
            }
            self.state.rho = T::lit(self.schedule.rate(self.state.slot_count));
            return Ok(());
        }
        let s_star = chosen.expect("started implies a regeneration state");
        // validates feasibility before buffering
        self.state.theta.score_at(index, a)?;
        self.cycle.push((index, a, reward));
        if self.cycle.len() as u64 > self.cap {
            return Err(Error::RecurrenceViolation { state: s_star, cap: self.cap });
        }
        if next == s_star {
            self.close_cycle(slot)?;
        }
        self.state.rho = T::lit(self.schedule.rate(self.state.slot_count));
        Ok(())
    }

    fn close_cycle(&mut self, slot: u64) -> Result<()> {
        let st = &mut self.state;
        let rho = T::lit(self.schedule.rate(slot));
        let xi = st.xi_hat;
        let grad = cycle_gradient(&st.theta, &self.cycle, xi)?;
        let centered: T = self.cycle.iter().map(|&(_, _, r)| r - xi).sum();
        for (t, g) in st.theta.theta_mut().iter_mut().zip(&grad) {
            *t += rho * *g;
        }
        st.xi_hat += st.nu * rho * centered;
        st.visit_count += 1;
        self.cycle.clear();
        if !st.xi_hat.is_finite() || !st.theta.is_finite() {
            return Err(Error::Divergence { slot });
        }
        Ok(())
    }
}

/// Cycle-based counterpart of [`crate::learner::learn_online`].
pub fn learn_regenerative<T: Scalar, E: Environment + ?Sized>(
    env: &mut E,
    theta0: PolicyParams<T>,
    config: &LearnerConfig,
    total_slots: u64,
    rng: &mut dyn RngCore,
) -> Result<LearningRun<T>> {
    if total_slots == 0 {
        return Err(Error::Precondition("total_slots must be at least 1".into()));
    }
    let mut learner = RegenerativeLearner::new(theta0, config)?;
    let mut metrics = MetricsAccumulator::new(total_slots);
    let mut curve = Vec::new();
    let mut s = env.reset(rng);
    for k in 1..=total_slots {
        let a = learner.choose(s, rng)?;
        let outcome = env.step(s, a, rng)?;
        learner.observe(s, a, T::from_u32(outcome.throughput).unwrap(), outcome.next)?;
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
