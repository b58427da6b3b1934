//! The `learn`, `solve`, `sweep` and `eval` commands.

use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;

use crn_core::learner::{learn_online, learn_regenerative, PolicyParams};
use crn_core::mdp::{bellman_residual, build_model, evaluate_policy_exact, solve_optimal, Policy, PolicyEvaluation};
use crn_core::{derive_seed, rng_from_seed, run_trajectory, Baseline, EnvParams, LearningRun64, PolicySource, RunMetrics,
    Simulator, Solution64, TransitionModel64};

use crate::config::{ExperimentConfig, LearnerKind, PolicyKind};
use crate::output::{csv_bytes, fmt_f64, write_atomic};

pub const CURVE_HEADER: [&str; 4] = ["slot", "xi_hat", "empirical_avg_throughput", "rho"];
pub const SWEEP_HEADER: [&str; 10] = [
    "sweep_param",
    "value",
    "policy",
    "avg_throughput",
    "avg_queue",
    "blocking_prob",
    "replication",
    "seed",
    "method",
    "latency",
];
pub const EVAL_HEADER: [&str; 11] = [
    "policy",
    "method",
    "replication",
    "seed",
    "avg_throughput",
    "throughput_se",
    "avg_queue",
    "queue_se",
    "blocking_prob",
    "blocking_se",
    "latency",
];

/// How a row's metrics were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Stationary analysis of the policy's chain.
    Exact,
    /// Trajectory of a fixed policy.
    Simulated,
    /// The learner's own trajectory while it was learning.
    Learning,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Simulated => "simulated",
            Method::Learning => "learning",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub avg_throughput: f64,
    pub avg_queue: f64,
    pub blocking_prob: f64,
    pub throughput_se: f64,
    pub queue_se: f64,
    pub blocking_se: f64,
    pub latency: f64,
}

impl Metrics {
    fn exact(e: &PolicyEvaluation<f64>, alpha: f64) -> Self {
        let accepted = alpha * (1.0 - e.blocking_prob);
        Self {
            avg_throughput: e.throughput,
            avg_queue: e.avg_queue,
            blocking_prob: e.blocking_prob,
            throughput_se: 0.0,
            queue_se: 0.0,
            blocking_se: 0.0,
            latency: if accepted > 0.0 { e.avg_queue / accepted } else { f64::NAN },
        }
    }

    fn simulated(m: &RunMetrics, alpha: f64) -> Self {
        Self {
            avg_throughput: m.avg_throughput,
            avg_queue: m.avg_queue,
            blocking_prob: m.blocking_prob,
            throughput_se: m.throughput_se,
            queue_se: m.queue_se,
            blocking_se: m.blocking_se,
            latency: m.latency(alpha),
        }
    }
}

fn baseline(kind: PolicyKind, cfg: &ExperimentConfig) -> Option<Baseline> {
    match kind {
        PolicyKind::Htt => Some(Baseline::Htt),
        PolicyKind::Backscatter => Some(Baseline::Backscatter { harvest_when_empty: cfg.backscatter_harvest_when_empty }),
        PolicyKind::Random => Some(Baseline::Random),
        PolicyKind::Learned | PolicyKind::Optimal => None,
    }
}

/// Seed stream for (sweep point, policy, replication).
pub fn stream(point: u64, policy: PolicyKind, replication: u64) -> u64 {
    (point << 32) | (policy.ordinal() << 24) | replication
}

/// Trains a fresh learner from `θ = 0` with the configured algorithm.
pub fn train(cfg: &ExperimentConfig, env: &EnvParams<f64>, seed: u64) -> Result<LearningRun64> {
    let mut sim = Simulator::new(*env)?;
    let theta0 = PolicyParams::zeros(&env.space());
    let lc = cfg.learner_config();
    let mut rng = rng_from_seed(seed);
    let run = match cfg.learner {
        LearnerKind::Online => learn_online(&mut sim, theta0, &lc, cfg.slots, &mut rng),
        LearnerKind::Regenerative => learn_regenerative(&mut sim, theta0, &lc, cfg.slots, &mut rng),
    }?;
    Ok(LearningRun64 { metrics: run.metrics.clone().with_seed(seed), ..run })
}

fn solve(cfg: &ExperimentConfig, model: &TransitionModel64) -> Result<Solution64> {
    Ok(solve_optimal(model, cfg.oracle_tol, cfg.oracle_max_iters)?)
}

fn write_config_echo(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = cfg.output_dir.join("config.resolved");
    write_atomic(&path, cfg.to_kv().as_bytes())?;
    Ok(path)
}

fn policy_table(space: &crn_core::StateSpace, policy: &Policy<f64>) -> String {
    let mut out = String::from("# index c d e p_idle p_transmit p_harvest p_backscatter\n");
    for (i, s) in space.states().enumerate() {
        let p = policy.probs(i);
        out += &format!(
            "{i} {} {} {} {} {} {} {}\n",
            s.channel.flag(),
            s.data,
            s.energy,
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(p[2]),
            fmt_f64(p[3])
        );
    }
    out
}

fn kv_report(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[derive(Clone, Debug)]
pub struct LearnReport {
    pub seed: u64,
    pub run: LearningRun64,
    pub learned_exact: PolicyEvaluation<f64>,
    pub optimal_gain: f64,
    pub files: Vec<PathBuf>,
}

/// Learning curve, final policy table and a summary comparing the learned policy with
/// the optimum.
pub fn cmd_learn(cfg: &ExperimentConfig) -> Result<LearnReport> {
    let seed = derive_seed(cfg.master_seed, 0);
    let run = train(cfg, &cfg.env, seed).context("learning run")?;
    let model = build_model(&cfg.env)?;
    let policy = run.state.theta.to_policy();
    let learned_exact = evaluate_policy_exact(&model, &policy).context("evaluating the learned policy")?;
    let optimal_gain = solve(cfg, &model)?.gain;

    let dir = &cfg.output_dir;
    let mut files = vec![write_config_echo(cfg)?];
    let curve = csv_bytes(
        &CURVE_HEADER,
        run.curve.iter().map(|p| {
            [p.slot.to_string(), fmt_f64(p.xi_hat), fmt_f64(p.empirical_avg_throughput), fmt_f64(p.rho)]
        }),
    )?;
    let path = dir.join("learning_curve.csv");
    write_atomic(&path, &curve)?;
    files.push(path);
    let path = dir.join("learned_policy.txt");
    write_atomic(&path, policy_table(&cfg.env.space(), &policy).as_bytes())?;
    files.push(path);
    let summary = kv_report(&[
        ("seed", seed.to_string()),
        ("slots", run.metrics.slots.to_string()),
        ("final_empirical_avg_throughput", fmt_f64(run.metrics.avg_throughput)),
        ("final_xi_hat", fmt_f64(run.state.xi_hat)),
        ("regeneration_visits", run.state.visit_count.to_string()),
        ("learned_exact_throughput", fmt_f64(learned_exact.throughput)),
        ("learned_exact_avg_queue", fmt_f64(learned_exact.avg_queue)),
        ("learned_exact_blocking_prob", fmt_f64(learned_exact.blocking_prob)),
        ("optimal_gain", fmt_f64(optimal_gain)),
        ("learned_over_optimal", fmt_f64(learned_exact.throughput / optimal_gain)),
    ]);
    let path = dir.join("learn_summary.txt");
    write_atomic(&path, summary.as_bytes())?;
    files.push(path);
    Ok(LearnReport { seed, run, learned_exact, optimal_gain, files })
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: Solution64,
    pub residual: f64,
    pub optimal_exact: PolicyEvaluation<f64>,
    /// Exact evaluation of each baseline, in `htt, backscatter, random` order.
    pub baselines: Vec<(Baseline, PolicyEvaluation<f64>)>,
    pub files: Vec<PathBuf>,
}

/// Optimal policy, gain, Bellman residual and the baselines' exact throughputs.
pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<SolveReport> {
    let model = build_model(&cfg.env)?;
    let solution = solve(cfg, &model)?;
    let residual = bellman_residual(&model, &solution.bias, solution.gain);
    let optimal_exact = evaluate_policy_exact(&model, &solution.policy).context("evaluating the optimal policy")?;
    let space = cfg.env.space();
    let baselines = [PolicyKind::Htt, PolicyKind::Backscatter, PolicyKind::Random]
        .into_iter()
        .map(|k| {
            let b = baseline(k, cfg).unwrap();
            let e = evaluate_policy_exact(&model, &b.table(&space)).with_context(|| format!("evaluating {b}"))?;
            Ok((b, e))
        })
        .collect::<Result<Vec<_>>>()?;

    let dir = &cfg.output_dir;
    let mut files = vec![write_config_echo(cfg)?];
    let mut table = String::from("# index c d e action\n");
    for (i, (s, a)) in space.states().zip(&solution.actions).enumerate() {
        table += &format!("{i} {} {} {} {}\n", s.channel.flag(), s.data, s.energy, a.name());
    }
    let path = dir.join("optimal_policy.txt");
    write_atomic(&path, table.as_bytes())?;
    files.push(path);
    let best = baselines
        .iter()
        .filter(|(b, _)| !matches!(b, Baseline::Random))
        .map(|(_, e)| e.throughput)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut pairs = vec![
        ("gain", fmt_f64(solution.gain)),
        ("bellman_residual", fmt_f64(residual)),
        ("iterations", solution.iterations.to_string()),
        ("span", fmt_f64(solution.span)),
        ("optimal_avg_queue", fmt_f64(optimal_exact.avg_queue)),
        ("optimal_blocking_prob", fmt_f64(optimal_exact.blocking_prob)),
    ];
    let names = ["htt_throughput", "backscatter_throughput", "random_throughput"];
    for (name, (_, e)) in names.iter().zip(&baselines) {
        pairs.push((name, fmt_f64(e.throughput)));
    }
    pairs.push(("gain_over_best_conventional", fmt_f64(solution.gain / best)));
    let path = dir.join("solve_report.txt");
    write_atomic(&path, kv_report(&pairs).as_bytes())?;
    files.push(path);
    Ok(SolveReport { solution, residual, optimal_exact, baselines, files })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sweep_param: &'static str,
    pub value: f64,
    pub policy: PolicyKind,
    pub method: Method,
    pub replication: u64,
    pub seed: u64,
    pub metrics: Metrics,
}

impl SweepRow {
    fn record(&self) -> [String; 10] {
        [
            self.sweep_param.to_string(),
            fmt_f64(self.value),
            self.policy.name().to_string(),
            fmt_f64(self.metrics.avg_throughput),
            fmt_f64(self.metrics.avg_queue),
            fmt_f64(self.metrics.blocking_prob),
            self.replication.to_string(),
            self.seed.to_string(),
            self.method.name().to_string(),
            fmt_f64(self.metrics.latency),
        ]
    }
}

struct Point {
    value: f64,
    env: EnvParams<f64>,
    model: TransitionModel64,
    optimal: Option<Solution64>,
}

/// Rows for one policy at one grid point: one exact row for stationary policies plus one
/// row per replication.
fn sweep_job(cfg: &ExperimentConfig, param: &'static str, index: u64, pt: &Point, kind: PolicyKind) -> Result<Vec<SweepRow>> {
    let alpha = pt.env.alpha;
    let row = |method, replication, seed, metrics| SweepRow {
        sweep_param: param,
        value: pt.value,
        policy: kind,
        method,
        replication,
        seed,
        metrics,
    };
    let mut rows = Vec::new();
    let fixed: Option<Box<dyn PolicySource>> = match kind {
        PolicyKind::Learned => None,
        PolicyKind::Optimal => Some(Box::new(pt.optimal.as_ref().unwrap().policy.clone())),
        other => Some(Box::new(baseline(other, cfg).unwrap())),
    };
    match fixed {
        Some(source) => {
            let table = match kind {
                PolicyKind::Optimal => pt.optimal.as_ref().unwrap().policy.clone(),
                other => baseline(other, cfg).unwrap().table(&pt.env.space()),
            };
            let exact = evaluate_policy_exact(&pt.model, &table)?;
            rows.push(row(Method::Exact, 0, 0, Metrics::exact(&exact, alpha)));
            for rep in 0..cfg.replications {
                let seed = derive_seed(cfg.master_seed, stream(index, kind, rep));
                let m = run_trajectory(source.as_ref(), &pt.env, cfg.slots, seed)?;
                rows.push(row(Method::Simulated, rep, seed, Metrics::simulated(&m, alpha)));
            }
        }
        None => {
            for rep in 0..cfg.replications {
                let seed = derive_seed(cfg.master_seed, stream(index, kind, rep));
                let run = train(cfg, &pt.env, seed)?;
                let exact = evaluate_policy_exact(&pt.model, &run.state.theta.to_policy())?;
                rows.push(row(Method::Learning, rep, seed, Metrics::simulated(&run.metrics, alpha)));
                rows.push(row(Method::Exact, rep, seed, Metrics::exact(&exact, alpha)));
            }
        }
    }
    Ok(rows)
}

/// Every requested policy at every grid point; rows are ordered by grid point, then
/// policy in the requested order, then replication.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let sweep = cfg.sweep.as_ref().context("the sweep command needs a sweep (e.g. --sweep eta=0.1:0.1:0.9)")?;
    let param = sweep.param.name();
    let need_optimal = cfg.policies.contains(&PolicyKind::Optimal);
    let points = sweep
        .values
        .par_iter()
        .map(|&value| {
            let mut env = cfg.env;
            sweep.param.apply(&mut env, value);
            let ctx = || format!("sweep point {param}={value}");
            let model = build_model(&env).with_context(ctx)?;
            let optimal = if need_optimal { Some(solve(cfg, &model).with_context(ctx)?) } else { None };
            Ok(Point { value, env, model, optimal })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, PolicyKind)> =
        (0..points.len()).flat_map(|i| cfg.policies.iter().map(move |&k| (i, k))).collect();
    let chunks = jobs
        .par_iter()
        .map(|&(i, kind)| {
            sweep_job(cfg, param, i as u64, &points[i], kind)
                .with_context(|| format!("sweep point {param}={}, policy {kind}", points[i].value))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    csv_bytes(&SWEEP_HEADER, rows.iter().map(SweepRow::record))
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, Vec<PathBuf>)> {
    let rows = run_sweep(cfg)?;
    let param = cfg.sweep.as_ref().unwrap().param.name();
    let mut files = vec![write_config_echo(cfg)?];
    let path = cfg.output_dir.join(format!("sweep_{param}.csv"));
    write_atomic(&path, &sweep_csv(&rows)?)?;
    files.push(path);
    Ok((rows, files))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub policy: PolicyKind,
    pub method: Method,
    pub replication: u64,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Exact and simulated metrics of each requested policy at the configured parameters.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<(Vec<EvalRow>, Vec<PathBuf>)> {
    let single = ExperimentConfig {
        sweep: Some(crate::config::Sweep { param: crate::config::SweepParam::Eta, values: vec![cfg.env.eta] }),
        ..cfg.clone()
    };
    let rows: Vec<EvalRow> = run_sweep(&single)?
        .into_iter()
        .map(|r| EvalRow { policy: r.policy, method: r.method, replication: r.replication, seed: r.seed, metrics: r.metrics })
        .collect();
    let mut files = vec![write_config_echo(cfg)?];
    let bytes = csv_bytes(
        &EVAL_HEADER,
        rows.iter().map(|r| {
            let m = &r.metrics;
            [
                r.policy.name().to_string(),
                r.method.name().to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                fmt_f64(m.avg_throughput),
                fmt_f64(m.throughput_se),
                fmt_f64(m.avg_queue),
                fmt_f64(m.queue_se),
                fmt_f64(m.blocking_prob),
                fmt_f64(m.blocking_se),
                fmt_f64(m.latency),
            ]
        }),
    )?;
    let path = cfg.output_dir.join("eval.csv");
    write_atomic(&path, &bytes)?;
    files.push(path);
    Ok((rows, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, Sweep};

    fn small_cfg(dir: &std::path::Path) -> ExperimentConfig {
        let mut cfg = parse_config("slots=20000\ncurve_stride=5000\n").unwrap();
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn zero_slots_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { slots: 0, ..small_cfg(dir.path()) };
        assert!(cmd_learn(&cfg).is_err());
    }

    #[test]
    fn learn_writes_curve_and_policy() {
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_learn(&small_cfg(dir.path())).unwrap();
        let curve = std::fs::read_to_string(dir.path().join("learning_curve.csv")).unwrap();
        let mut lines = curve.lines();
        assert_eq!(lines.next().unwrap(), "slot,xi_hat,empirical_avg_throughput,rho");
        assert_eq!(lines.count(), 4);
        let table = std::fs::read_to_string(dir.path().join("learned_policy.txt")).unwrap();
        assert_eq!(table.lines().count(), 243);
        assert!(r.optimal_gain >= r.learned_exact.throughput - 1e-9);
    }

    #[test]
    fn solve_without_arrivals() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.env.alpha = 0.0;
        let r = cmd_solve(&cfg).unwrap();
        assert!(r.solution.gain.abs() <= 1e-9);
        assert_eq!(r.optimal_exact.throughput, 0.0);
        for (_, e) in &r.baselines {
            assert_eq!(e.throughput, 0.0);
        }
    }

    #[test]
    fn solve_defaults_beats_conventional() {
        let dir = tempfile::tempdir().unwrap();
        let r = cmd_solve(&small_cfg(dir.path())).unwrap();
        assert!(r.residual <= 1e-9);
        for (b, e) in &r.baselines {
            assert!(r.solution.gain > e.throughput, "{b}");
        }
        let report = std::fs::read_to_string(dir.path().join("solve_report.txt")).unwrap();
        assert!(report.starts_with("gain=0.499999826\n"), "{report}");
    }

    #[test]
    fn sweep_without_arrivals_delivers_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.sweep = Some("alpha=0".parse::<Sweep>().unwrap());
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2 + 4 * 2);
        assert!(rows.iter().all(|r| r.metrics.avg_throughput.abs() <= 1e-9), "{rows:?}");
    }

    #[test]
    fn seeds_do_not_depend_on_requested_policies() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.sweep = Some("eta=0.3,0.6".parse::<Sweep>().unwrap());
        cfg.policies = vec![PolicyKind::Htt];
        let only = run_sweep(&cfg).unwrap();
        cfg.policies = vec![PolicyKind::Random, PolicyKind::Htt];
        let both = run_sweep(&cfg).unwrap();
        let htt: Vec<_> = both.into_iter().filter(|r| r.policy == PolicyKind::Htt).collect();
        assert_eq!(only, htt);
    }
}
