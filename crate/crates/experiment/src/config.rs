//! Flat `key=value` experiment configuration.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crn_core::{EnvParams, LearnerConfig, ScheduleMode, State, StepSchedule};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Learned,
    Optimal,
    Htt,
    Backscatter,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::Learned, PolicyKind::Optimal, PolicyKind::Htt, PolicyKind::Backscatter, PolicyKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Learned => "learned",
            PolicyKind::Optimal => "optimal",
            PolicyKind::Htt => "htt",
            PolicyKind::Backscatter => "backscatter",
            PolicyKind::Random => "random",
        }
    }

    /// Position in [`PolicyKind::ALL`]; used for seed streams so a policy's seeds do not
    /// depend on which other policies were requested.
    pub fn ordinal(self) -> u64 {
        PolicyKind::ALL.iter().position(|&p| p == self).unwrap() as u64
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| format!("unknown policy `{}` (expected learned, optimal, htt, backscatter or random)", s.trim()))
    }
}

pub fn parse_policies(s: &str) -> Result<Vec<PolicyKind>, String> {
    let mut out: Vec<PolicyKind> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let p: PolicyKind = part.parse()?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err("at least one policy is required".into());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Eta,
    Alpha,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::Alpha => "alpha",
        }
    }

    pub fn apply(self, env: &mut EnvParams<f64>, value: f64) {
        match self {
            SweepParam::Eta => env.eta = value,
            SweepParam::Alpha => env.alpha = value,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn grid(param: SweepParam) -> Self {
        Self { param, values: (1..=9).map(|k| k as f64 / 10.0).collect() }
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vals: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        write!(f, "{}={}", self.param.name(), vals.join(","))
    }
}

impl FromStr for Sweep {
    type Err = String;

    /// `eta=0.1:0.1:0.9` (start:step:stop) or `alpha=0.2,0.5,0.8`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, spec) = s.split_once('=').ok_or_else(|| format!("expected PARAM=GRID, got `{s}`"))?;
        let param = match name.trim() {
            "eta" => SweepParam::Eta,
            "alpha" => SweepParam::Alpha,
            other => return Err(format!("can only sweep eta or alpha, not `{other}`")),
        };
        let spec = spec.trim();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", t.trim()));
        let values = if spec.contains(':') {
            let parts: Vec<&str> = spec.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("range must be start:step:stop, got `{spec}`"));
            }
            let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || stop < start {
                return Err(format!("empty or unbounded range `{spec}`"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // Rounded so that 0.1:0.1:0.9 yields 0.3 rather than 0.30000000000000004.
            (0..n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
        } else {
            spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
        };
        if values.is_empty() {
            return Err("empty sweep grid".into());
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(format!("grid value {v} out of [0,1]"));
        }
        Ok(Sweep { param, values })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnerKind {
    Online,
    Regenerative,
}

impl FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "online" => Ok(LearnerKind::Online),
            "regenerative" => Ok(LearnerKind::Regenerative),
            other => Err(format!("unknown learner `{other}` (expected online or regenerative)")),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Online => "online",
            LearnerKind::Regenerative => "regenerative",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvParams<f64>,
    pub schedule: StepSchedule,
    pub nu: f64,
    pub learner: LearnerKind,
    pub s_star: Option<State>,
    pub s_star_window: u64,
    pub curve_stride: u64,
    pub slots: u64,
    pub replications: u64,
    pub master_seed: u64,
    pub sweep: Option<Sweep>,
    pub policies: Vec<PolicyKind>,
    pub output_dir: PathBuf,
    pub backscatter_harvest_when_empty: bool,
    pub oracle_tol: f64,
    pub oracle_max_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvParams::default(),
            schedule: StepSchedule::default(),
            nu: 0.01,
            learner: LearnerKind::Online,
            s_star: None,
            s_star_window: 1000,
            curve_stride: 1000,
            slots: 100_000,
            replications: 1,
            master_seed: 0,
            sweep: None,
            policies: PolicyKind::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            backscatter_harvest_when_empty: false,
            oracle_tol: 1e-9,
            oracle_max_iters: 100_000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "alpha",
    "eta",
    "beta",
    "gamma",
    "sigma",
    "d_b",
    "d_t",
    "e_h",
    "e_t",
    "D",
    "E",
    "schedule",
    "rho0",
    "decay",
    "epoch",
    "nu",
    "learner",
    "s_star",
    "s_star_window",
    "curve_stride",
    "slots",
    "replications",
    "master_seed",
    "sweep",
    "policies",
    "output_dir",
    "backscatter_harvest_when_empty",
    "oracle_tol",
    "oracle_max_iters",
];

fn parse_state(s: &str) -> Result<Option<State>, String> {
    let s = s.trim();
    if s == "auto" {
        return Ok(None);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected `auto` or `c,d,e`, got `{s}`"));
    }
    let n = |t: &str| t.parse::<u32>().map_err(|_| format!("`{t}` is not a non-negative integer"));
    let channel = match n(parts[0])? {
        0 => crn_core::Channel::Idle,
        1 => crn_core::Channel::Busy,
        c => return Err(format!("channel flag must be 0 or 1, got {c}")),
    };
    Ok(Some(State::new(channel, n(parts[1])?, n(parts[2])?)))
}

fn format_state(s: Option<State>) -> String {
    match s {
        None => "auto".into(),
        Some(s) => format!("{},{},{}", s.channel.flag(), s.data, s.energy),
    }
}

impl ExperimentConfig {
    /// Sets one key; the error names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
            v.parse().map_err(|_| invalid(key, format!("`{v}` is not a valid number")))
        }
        let prob = |key: &str| -> Result<f64, ConfigError> {
            let p: f64 = num(key, v)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(key, format!("{key} out of [0,1]")));
            }
            Ok(p)
        };
        match key {
            "alpha" => self.env.alpha = prob(key)?,
            "eta" => self.env.eta = prob(key)?,
            "beta" => self.env.beta = prob(key)?,
            "gamma" => self.env.gamma = prob(key)?,
            "sigma" => self.env.sigma = prob(key)?,
            "d_b" => self.env.d_b = num(key, v)?,
            "d_t" => self.env.d_t = num(key, v)?,
            "e_h" => self.env.e_h = num(key, v)?,
            "e_t" => self.env.e_t = num(key, v)?,
            "D" => self.env.max_data = num(key, v)?,
            "E" => self.env.max_energy = num(key, v)?,
            "schedule" => self.schedule.mode = v.parse::<ScheduleMode>().map_err(|e| invalid(key, e))?,
            "rho0" => self.schedule.rho0 = num(key, v)?,
            "decay" => self.schedule.decay = num(key, v)?,
            "epoch" => self.schedule.epoch = num(key, v)?,
            "nu" => self.nu = num(key, v)?,
            "learner" => self.learner = v.parse().map_err(|e: String| invalid(key, e))?,
            "s_star" => self.s_star = parse_state(v).map_err(|e| invalid(key, e))?,
            "s_star_window" => self.s_star_window = num(key, v)?,
            "curve_stride" => self.curve_stride = num(key, v)?,
            "slots" => self.slots = num(key, v)?,
            "replications" => self.replications = num(key, v)?,
            "master_seed" => self.master_seed = num(key, v)?,
            "sweep" => {
                self.sweep = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(v.parse().map_err(|e: String| invalid(key, e))?)
                }
            }
            "policies" => self.policies = parse_policies(v).map_err(|e| invalid(key, e))?,
            "output_dir" => {
                if v.is_empty() {
                    return Err(invalid(key, "empty path"));
                }
                self.output_dir = PathBuf::from(v)
            }
            "backscatter_harvest_when_empty" => {
                self.backscatter_harvest_when_empty = match v {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(invalid(key, format!("`{v}` is not a boolean"))),
                }
            }
            "oracle_tol" => self.oracle_tol = num(key, v)?,
            "oracle_max_iters" => self.oracle_max_iters = num(key, v)?,
            _ => return Err(invalid(key, "unknown key")),
        }
        Ok(())
    }

    /// Cross-field checks after all keys are set.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate().map_err(|e| match e {
            crn_core::Error::InvalidParams { name, reason } => invalid(name, reason),
            other => invalid("env", other.to_string()),
        })?;
        self.schedule.validate().map_err(|e| {
            let key = if e.starts_with("rho0") {
                "rho0"
            } else if e.starts_with("decay") {
                "decay"
            } else {
                "epoch"
            };
            invalid(key, e)
        })?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("nu", "nu must be positive"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "replications must be at least 1"));
        }
        if self.s_star_window == 0 {
            return Err(invalid("s_star_window", "s_star_window must be at least 1"));
        }
        if self.curve_stride == 0 {
            return Err(invalid("curve_stride", "curve_stride must be at least 1"));
        }
        if !(self.oracle_tol > 0.0) {
            return Err(invalid("oracle_tol", "oracle_tol must be positive"));
        }
        if let Some(s) = self.s_star {
            if !self.env.space().contains(s) {
                return Err(invalid("s_star", format!("{s} is outside the state space")));
            }
        }
        Ok(())
    }

    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            schedule: self.schedule,
            nu: self.nu,
            s_star: self.s_star,
            s_star_window: self.s_star_window,
            curve_stride: self.curve_stride,
            ..Default::default()
        }
    }

    /// The resolved configuration in the same `key=value` format it is read from.
    pub fn to_kv(&self) -> String {
        let e = &self.env;
        let policies: Vec<&str> = self.policies.iter().map(|p| p.name()).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("alpha", e.alpha.to_string());
        kv("eta", e.eta.to_string());
        kv("beta", e.beta.to_string());
        kv("gamma", e.gamma.to_string());
        kv("sigma", e.sigma.to_string());
        kv("d_b", e.d_b.to_string());
        kv("d_t", e.d_t.to_string());
        kv("e_h", e.e_h.to_string());
        kv("e_t", e.e_t.to_string());
        kv("D", e.max_data.to_string());
        kv("E", e.max_energy.to_string());
        kv("schedule", self.schedule.mode.to_string());
        kv("rho0", self.schedule.rho0.to_string());
        kv("decay", self.schedule.decay.to_string());
        kv("epoch", self.schedule.epoch.to_string());
        kv("nu", self.nu.to_string());
        kv("learner", self.learner.to_string());
        kv("s_star", format_state(self.s_star));
        kv("s_star_window", self.s_star_window.to_string());
        kv("curve_stride", self.curve_stride.to_string());
        kv("slots", self.slots.to_string());
        kv("replications", self.replications.to_string());
        kv("master_seed", self.master_seed.to_string());
        kv("sweep", self.sweep.as_ref().map_or_else(|| "none".to_string(), |s| s.to_string()));
        kv("policies", policies.join(","));
        kv("output_dir", self.output_dir.display().to_string());
        kv("backscatter_harvest_when_empty", self.backscatter_harvest_when_empty.to_string());
        kv("oracle_tol", self.oracle_tol.to_string());
        kv("oracle_max_iters", self.oracle_max_iters.to_string());
        out
    }
}

/// Parses configuration text; missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected key=value, got `{content}`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.to_string() });
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_config(&text)
}
