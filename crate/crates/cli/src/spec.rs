//! Sweep specifications and the small value types the flags parse into.

use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use ethsm::model::RewardSchedule;
use ethsm::revenue::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Analytic,
    Simulate,
    Both,
}

impl Mode {
    pub fn analytic(self) -> bool {
        matches!(self, Mode::Analytic | Mode::Both)
    }

    pub fn simulate(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Both)
    }
}

/// Inclusive `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AlphaRange {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12).collect()
    }
}

impl FromStr for AlphaRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(format!("expected start:stop:step, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{t}`"));
        let r = AlphaRange { start: num(start)?, stop: num(stop)?, step: num(step)? };
        if r.step.is_nan() || r.step <= 0.0 {
            return Err("step must be positive".into());
        }
        if r.stop < r.start {
            return Err("stop must not be below start".into());
        }
        Ok(r)
    }
}

impl fmt::Display for AlphaRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub alpha_range: AlphaRange,
    pub gamma_list: Vec<f64>,
    pub schedules: Vec<RewardSchedule>,
    pub scenarios: Vec<Scenario>,
    pub mode: Mode,
}

impl SweepSpec {
    /// Checks every grid value against the domain of the requested mode.
    pub fn validate(&self) -> Result<(), String> {
        let upper = if self.mode.analytic() { 0.5 } else { 1.0 };
        for a in self.alpha_range.values() {
            if !(a > 0.0 && a < upper) {
                return Err(format!("alpha {a} outside (0, {upper}) for {:?} mode", self.mode));
            }
        }
        if let Some(g) = self.gamma_list.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(format!("gamma {g} outside [0, 1]"));
        }
        if self.gamma_list.is_empty() || self.schedules.is_empty() || self.scenarios.is_empty() {
            return Err("sweep needs at least one gamma, schedule and scenario".into());
        }
        Ok(())
    }

    /// Grid cells in output order: schedule, then gamma, then alpha.
    pub fn cells(&self) -> Vec<(RewardSchedule, f64, f64)> {
        let alphas = self.alpha_range.values();
        let mut out = Vec::new();
        for s in &self.schedules {
            for &g in &self.gamma_list {
                for &a in &alphas {
                    out.push((*s, g, a));
                }
            }
        }
        out
    }
}
