use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleMode {
    /// `ρ_k = ρ0 · decay^⌊k / epoch⌋`. Summable, so it stops learning eventually.
    GeometricEpoch,
    /// `ρ_k = ρ0 / (1 + k / epoch)`: divergent sum, square-summable.
    Harmonic,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::GeometricEpoch => "geometric",
            ScheduleMode::Harmonic => "harmonic",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "geometric" | "geometric-epoch" => Ok(ScheduleMode::GeometricEpoch),
            "harmonic" => Ok(ScheduleMode::Harmonic),
            other => Err(format!("unknown schedule `{other}` (expected geometric or harmonic)")),
        }
    }
}

/// Deterministic step-size sequence indexed by slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub mode: ScheduleMode,
    pub rho0: f64,
    pub decay: f64,
    pub epoch: u64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { mode: ScheduleMode::GeometricEpoch, rho0: 1e-5, decay: 0.9, epoch: 18_000 }
    }
}

impl StepSchedule {
    pub fn constant(rho: f64) -> Self {
        Self { mode: ScheduleMode::GeometricEpoch, rho0: rho, decay: 0.5, epoch: u64::MAX }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(format!("rho0 must be positive, got {}", self.rho0));
        }
        if self.mode == ScheduleMode::GeometricEpoch && !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(format!("decay must lie in (0,1), got {}", self.decay));
        }
        if self.epoch == 0 {
            return Err("epoch must be at least 1".into());
        }
        Ok(())
    }

    pub fn rate(&self, slot: u64) -> f64 {
        match self.mode {
            ScheduleMode::GeometricEpoch => {
                let epochs = slot / self.epoch;
                self.rho0 * self.decay.powi(epochs.min(i32::MAX as u64) as i32)
            }
            ScheduleMode::Harmonic => self.rho0 / (1.0 + slot as f64 / self.epoch as f64),
        }
    }
}
