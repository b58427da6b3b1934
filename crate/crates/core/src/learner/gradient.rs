//! Exact and estimated gradients of the average throughput with respect to the
//! softmax preferences.
//!
//! The exact gradient uses the stationary distribution and the differential throughput
//! relative to a regeneration state:
//!
//! ```text
//! ∂ξ/∂θ(s,a) = π(s) · χ(s,a) · (q(s,a) − Σ_a' χ(s,a') q(s,a'))
//! q(s,a)     = r(s,a) − ξ + Σ_s' P(s'|s,a) d(s')
//! d(s)       = r_θ(s) − ξ + Σ_{s' ≠ s*} P_θ(s, s') d(s')
//! ```
//!
//! It is cross-checked against central finite differences of the exactly evaluated
//! throughput and against the mean of per-cycle estimates from simulation.

use rand::RngCore;
use rayon::prelude::*;

use crate::env::{Action, EnvParams, State};
use crate::error::{Error, Result};
use crate::learner::regenerative::cycle_gradient;
use crate::learner::softmax::PolicyParams;
use crate::mdp::linalg::{self, Dense};
use crate::mdp::{evaluate_policy_exact, induced_chain, stationary_distribution, TransitionModel};
use crate::metrics::rng_from_seed;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ExactGradient<T> {
    pub gradient: Vec<T>,
    pub throughput: T,
    pub stationary: Vec<T>,
    /// Differential action values, indexed like the parameter vector.
    pub q: Vec<T>,
    pub s_star: State,
    /// Mean regeneration cycle length, `1 / π(s*)`.
    pub mean_cycle_length: T,
}

/// Exact gradient; `s_star` defaults to the most probable state.
pub fn exact_gradient<T: Scalar>(
    model: &TransitionModel<T>,
    theta: &PolicyParams<T>,
    s_star: Option<State>,
) -> Result<ExactGradient<T>> {
    let space = *model.space();
    if theta.space() != &space {
        return Err(Error::Precondition("parameter layout does not match the model".into()));
    }
    let policy = theta.to_policy();
    let chain = induced_chain(model, &policy)?;
    let pi = stationary_distribution(model, &chain.p)?;
    let n = pi.len();
    let xi: T = pi.iter().zip(&chain.reward).map(|(&w, &r)| w * r).sum();

    let star = match s_star {
        Some(s) => space.index(s)?,
        None => (0..n).fold(0, |best, i| if pi[i] > pi[best] { i } else { best }),
    };
    if pi[star] <= T::zero() {
        return Err(Error::NotUnichain(format!("{} is not recurrent under the policy", space.state(star))));
    }

    // States that can reach s*; everything else has zero stationary mass and is never a
    // successor of a recurrent state.
    let adj = linalg::support_graph(&chain.p);
    let mut rev = vec![Vec::new(); n];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            rev[w].push(v);
        }
    }
    let mut reaches = vec![false; n];
    reaches[star] = true;
    let mut stack = vec![star];
    while let Some(v) = stack.pop() {
        for &u in &rev[v] {
            if !reaches[u] {
                reaches[u] = true;
                stack.push(u);
            }
        }
    }
    let members: Vec<usize> = (0..n).filter(|&i| reaches[i]).collect();
    let mut local = vec![usize::MAX; n];
    for (k, &i) in members.iter().enumerate() {
        local[i] = k;
    }
    let m = members.len();
    let mut a = Dense::zeros(m);
    let mut b = vec![T::zero(); m];
    for (r, &i) in members.iter().enumerate() {
        *a.at(r, r) += T::one();
        for &j in &adj[i] {
            if j != star && reaches[j] {
                *a.at(r, local[j]) -= chain.p.get(i, j);
            }
        }
        b[r] = chain.reward[i] - xi;
    }
    let sol = linalg::solve(a, b).ok_or_else(|| Error::NotUnichain("differential-value system is singular".into()))?;
    let mut d = vec![T::zero(); n];
    for (k, &i) in members.iter().enumerate() {
        d[i] = sol[k];
    }

    let layout = theta.layout();
    let mut q = vec![T::zero(); layout.dim()];
    let mut gradient = vec![T::zero(); layout.dim()];
    for i in 0..n {
        let dist = theta.distribution_at(i);
        let mut mean_q = T::zero();
        for (a, p) in dist.iter() {
            let row = model.row(i, a).expect("feasible action has a model row");
            let cont = row.next.iter().fold(T::zero(), |acc, &(j, w)| acc + w * d[j]);
            let pos = layout.position(i, a).expect("feasible action has a parameter");
            q[pos] = row.reward - xi + cont;
            mean_q += p * q[pos];
        }
        for (a, p) in dist.iter() {
            let pos = layout.position(i, a).unwrap();
            gradient[pos] = pi[i] * p * (q[pos] - mean_q);
        }
    }
    Ok(ExactGradient {
        gradient,
        throughput: xi,
        mean_cycle_length: T::one() / pi[star],
        s_star: space.state(star),
        stationary: pi,
        q,
    })
}

/// Central differences `(ξ(θ + εe_i) − ξ(θ − εe_i)) / 2ε` with exact evaluation.
///
/// A parameter of a single-action state cannot change the policy, so its difference is
/// zero without evaluation.
pub fn finite_difference_gradient<T: Scalar>(model: &TransitionModel<T>, theta: &PolicyParams<T>, eps: T) -> Result<Vec<T>> {
    let layout = theta.layout();
    (0..layout.dim())
        .into_par_iter()
        .map(|pos| {
            let (i, _) = layout.entry(pos);
            if layout.block(i).len() == 1 {
                return Ok(T::zero());
            }
            let eval = |delta: T| -> Result<T> {
                let mut th = theta.clone();
                th.theta_mut()[pos] += delta;
                Ok(evaluate_policy_exact(model, &th.to_policy())?.throughput)
            };
            Ok((eval(eps)? - eval(-eps)?) / (T::lit(2.0) * eps))
        })
        .collect()
}

/// Pooled per-cycle gradient estimates at a fixed policy.
#[derive(Clone, Debug)]
pub struct RegenerativeEstimate {
    pub cycles: u64,
    pub mean_cycle_length: f64,
    /// `mean(F) / mean(cycle length)`, an estimate of the gradient.
    pub ratio: Vec<f64>,
    /// Delta-method standard error of `ratio`.
    pub std_err: Vec<f64>,
}

/// Simulates `cycles` regeneration cycles from `s_star` with `θ` and `ξ` held fixed.
pub fn regenerative_gradient_estimate<T: Scalar>(
    params: &EnvParams<T>,
    theta: &PolicyParams<T>,
    s_star: State,
    xi: T,
    cycles: u64,
    cycle_cap: u64,
    rng: &mut dyn RngCore,
) -> Result<RegenerativeEstimate> {
    if cycles < 2 {
        return Err(Error::Precondition("at least two cycles are needed for a standard error".into()));
    }
    let space = params.space();
    let dim = theta.layout().dim();
    let mut sum_f = vec![0.0; dim];
    let mut sum_f2 = vec![0.0; dim];
    let mut sum_ft = vec![0.0; dim];
    let (mut sum_t, mut sum_t2) = (0.0, 0.0);
    let mut cycle: Vec<(usize, Action, T)> = Vec::new();
    for _ in 0..cycles {
        cycle.clear();
        let mut s = s_star;
        loop {
            let i = space.index(s)?;
            let a = theta.distribution_at(i).sample(rand::Rng::gen(rng));
            let out = crate::env::step(s, a, params, rng)?;
            cycle.push((i, a, T::from_u32(out.throughput).unwrap()));
            s = out.next;
            if s == s_star {
                break;
            }
            if cycle.len() as u64 >= cycle_cap {
                return Err(Error::RecurrenceViolation { state: s_star, cap: cycle_cap });
            }
        }
        let f = cycle_gradient(theta, &cycle, xi)?;
        let len = cycle.len() as f64;
        sum_t += len;
        sum_t2 += len * len;
        for k in 0..dim {
            let fk = f[k].to_f64_lossy();
            sum_f[k] += fk;
            sum_f2[k] += fk * fk;
            sum_ft[k] += fk * len;
        }
    }
    let n = cycles as f64;
    let mean_t = sum_t / n;
    let ratio: Vec<f64> = sum_f.iter().map(|&f| f / sum_t).collect();
    let std_err = (0..dim)
        .map(|k| {
            let r = ratio[k];
            // Σ (F − rT)² / (n − 1), then / n for the mean, / mean_t² for the ratio.
            let ss = sum_f2[k] - 2.0 * r * sum_ft[k] + r * r * sum_t2;
            (ss.max(0.0) / (n - 1.0) / n).sqrt() / mean_t
        })
        .collect();
    Ok(RegenerativeEstimate { cycles, mean_cycle_length: mean_t, ratio, std_err })
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub fd_max_abs_error: f64,
    /// `‖fd − analytic‖∞ / ‖analytic‖∞`.
    pub fd_max_rel_error: f64,
    pub regenerative: RegenerativeEstimate,
    /// Largest `|ratio − analytic| / std_err` over the parameters.
    pub max_z_score: f64,
    pub components_outside_3se: usize,
    /// Parameters whose state never appeared in any simulated cycle.
    pub unvisited_components: usize,
    /// `‖ratio − analytic‖₂`.
    pub norm_error: f64,
    /// `sqrt(Σ std_err²)`, the standard error of the estimate as a vector.
    pub norm_std_err: f64,
}

impl GradientReport {
    pub fn norm_z_score(&self) -> f64 {
        if self.norm_std_err > 0.0 {
            self.norm_error / self.norm_std_err
        } else if self.norm_error == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Central-difference step. Smaller steps lose more to rounding in `ξ` than they gain
/// in truncation error.
pub const FD_EPS: f64 = 1e-4;

/// Compares the exact gradient with finite differences and with `horizon × replications`
/// simulated regeneration cycles (one independent stream per replication).
pub fn gradient_estimate_check(
    model: &TransitionModel<f64>,
    theta: &PolicyParams<f64>,
    horizon: u64,
    replications: u64,
    rng: &mut dyn RngCore,
) -> Result<GradientReport> {
    if horizon < 2 || replications == 0 {
        return Err(Error::Precondition("need at least two cycles per replication and one replication".into()));
    }
    let exact = exact_gradient(model, theta, None)?;
    let fd = finite_difference_gradient(model, theta, FD_EPS)?;
    let scale = exact.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let fd_max_abs_error = fd.iter().zip(&exact.gradient).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let fd_max_rel_error = if scale > 0.0 { fd_max_abs_error / scale } else { fd_max_abs_error };

    let seeds: Vec<u64> = (0..replications).map(|_| rng.next_u64()).collect();
    let parts = seeds
        .into_par_iter()
        .map(|seed| {
            let mut r = rng_from_seed(seed);
            regenerative_gradient_estimate(model.params(), theta, exact.s_star, exact.throughput, horizon, 1_000_000, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let regenerative = pool(&parts, theta.layout().dim());

    let mut max_z_score = 0.0f64;
    let mut components_outside_3se = 0;
    let mut unvisited_components = 0;
    let (mut sq_err, mut sq_se) = (0.0, 0.0);
    for k in 0..exact.gradient.len() {
        let diff = (regenerative.ratio[k] - exact.gradient[k]).abs();
        sq_err += diff * diff;
        sq_se += regenerative.std_err[k] * regenerative.std_err[k];
        if regenerative.std_err[k] == 0.0 && theta.layout().block(theta.layout().entry(k).0).len() > 1 {
            unvisited_components += 1;
        }
        let z = if regenerative.std_err[k] > 0.0 {
            diff / regenerative.std_err[k]
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > 3.0 {
            components_outside_3se += 1;
        }
        max_z_score = max_z_score.max(z);
    }
    Ok(GradientReport {
        analytic: exact.gradient,
        finite_difference: fd,
        fd_max_abs_error,
        fd_max_rel_error,
        regenerative,
        max_z_score,
        components_outside_3se,
        unvisited_components,
        norm_error: sq_err.sqrt(),
        norm_std_err: sq_se.sqrt(),
    })
}

/// Pools equally sized replications: ratios weighted by total cycle length, standard errors
/// recombined from the per-replication ratio variances.
fn pool(parts: &[RegenerativeEstimate], dim: usize) -> RegenerativeEstimate {
    let total_len: f64 = parts.iter().map(|p| p.mean_cycle_length * p.cycles as f64).sum();
    let cycles: u64 = parts.iter().map(|p| p.cycles).sum();
    let mut ratio = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for p in parts {
        let w = p.mean_cycle_length * p.cycles as f64 / total_len;
        for k in 0..dim {
            ratio[k] += w * p.ratio[k];
            var[k] += w * w * p.std_err[k] * p.std_err[k];
        }
    }
    RegenerativeEstimate {
        cycles,
        mean_cycle_length: total_len / cycles as f64,
        ratio,
        std_err: var.into_iter().map(f64::sqrt).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::softmax::ParamLayout;
    use crate::mdp::build_model;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> EnvParams<f64> {
        EnvParams { max_data: 4, max_energy: 3, alpha: 0.6, eta: 0.4, ..Default::default() }
    }

    fn random_theta(space: &crate::env::StateSpace, seed: u64) -> PolicyParams<f64> {
        let layout = ParamLayout::new(space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let th = (0..layout.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        PolicyParams::from_vec(layout, th).unwrap()
    }

    #[test]
    fn analytic_matches_finite_differences_small() {
        let p = small();
        let m = build_model(&p).unwrap();
        for seed in 0..3 {
            let th = random_theta(&p.space(), seed);
            let exact = exact_gradient(&m, &th, None).unwrap();
            let fd = finite_difference_gradient(&m, &th, 1e-6).unwrap();
            let scale = exact.gradient.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            let err = fd.iter().zip(&exact.gradient).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err / scale < 1e-5, "seed {seed}: rel err {}", err / scale);
        }
    }

    #[test]
    fn gradient_independent_of_regeneration_state() {
        let p = small();
        let m = build_model(&p).unwrap();
        let th = random_theta(&p.space(), 9);
        let a = exact_gradient(&m, &th, None).unwrap();
        let b = exact_gradient(&m, &th, Some(State::idle(0, 0))).unwrap();
        for (x, y) in a.gradient.iter().zip(&b.gradient) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_action_states_have_zero_gradient() {
        let p = small();
        let m = build_model(&p).unwrap();
        let th = random_theta(&p.space(), 4);
        let g = exact_gradient(&m, &th, None).unwrap().gradient;
        let layout = th.layout();
        for pos in 0..layout.dim() {
            let (i, _) = layout.entry(pos);
            if layout.block(i).len() == 1 {
                assert_eq!(g[pos], 0.0);
            }
        }
    }

    #[test]
    fn per_state_gradient_sums_to_zero() {
        let p = small();
        let m = build_model(&p).unwrap();
        let th = random_theta(&p.space(), 2);
        let g = exact_gradient(&m, &th, None).unwrap().gradient;
        for i in 0..th.layout().n_states() {
            let s: f64 = th.layout().block(i).map(|k| g[k]).sum();
            assert!(s.abs() < 1e-14);
        }
    }
}
