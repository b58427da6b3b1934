use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crn_experiment::commands::{cmd_eval, cmd_learn, cmd_solve, cmd_sweep};
use crn_experiment::config::{load_config, ExperimentConfig};
use crn_experiment::output::fmt_f64;

#[derive(Parser, Debug)]
#[command(name = "crn", version, about = "Cognitive-radio backscatter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value configuration file; missing keys take default values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Slots per learning run or simulated trajectory.
    #[arg(long, global = true)]
    slots: Option<u64>,

    /// Comma-separated policies: learned, optimal, htt, backscatter, random.
    #[arg(long, global = true)]
    policy: Option<String>,

    /// Sweep grid, e.g. eta=0.1:0.1:0.9 or alpha=0.2,0.5.
    #[arg(long, global = true)]
    sweep: Option<String>,

    /// Any other configuration key, e.g. --set rho0=1e-4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the policy-gradient learner and write its learning curve.
    Learn,
    /// Compute the optimal policy and gain.
    Solve,
    /// Compare policies across a grid of eta or alpha.
    Sweep,
    /// Evaluate policies at the configured parameters.
    Eval,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(("master_seed".into(), s.to_string()));
    }
    if let Some(o) = &cli.out {
        overrides.push(("output_dir".into(), o.display().to_string()));
    }
    if let Some(n) = cli.slots {
        overrides.push(("slots".into(), n.to_string()));
    }
    if let Some(p) = &cli.policy {
        overrides.push(("policies".into(), p.clone()));
    }
    if let Some(s) = &cli.sweep {
        overrides.push(("sweep".into(), s.clone()));
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        if !crn_experiment::config::KEYS.contains(&k.trim()) {
            anyhow::bail!("unknown key `{}`", k.trim());
        }
        overrides.push((k.trim().to_string(), v.to_string()));
    }
    for (k, v) in &overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = resolve(&cli)?;
    print!("{}", cfg.to_kv());
    let files = match cli.command {
        Command::Learn => {
            let r = cmd_learn(&cfg)?;
            println!(
                "# final empirical throughput {} (xi_hat {}), learned policy {} of optimal {}",
                fmt_f64(r.run.metrics.avg_throughput),
                fmt_f64(r.run.state.xi_hat),
                fmt_f64(r.learned_exact.throughput),
                fmt_f64(r.optimal_gain)
            );
            r.files
        }
        Command::Solve => {
            let r = cmd_solve(&cfg)?;
            println!("# gain {} bellman residual {}", fmt_f64(r.solution.gain), fmt_f64(r.residual));
            r.files
        }
        Command::Sweep => cmd_sweep(&cfg)?.1,
        Command::Eval => cmd_eval(&cfg)?.1,
    };
    for f in files {
        println!("# wrote {}", f.display());
    }
    Ok(())
}
