//! Absolute revenue after difficulty adjustment, and the pool size at which
//! selfish mining starts to pay.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::markov::{stationary_closed_form, DEFAULT_TRUNCATION};
use crate::model::{MiningConfig, RewardSchedule};
use crate::report::fmt9;
use crate::rewards::{aggregate_revenue, RevenueBreakdown, RewardsError};

/// What the difficulty adjustment holds at one block per time unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scenario {
    /// Regular blocks only.
    RegularRateOne,
    /// Regular blocks plus referenced uncles.
    RegularPlusUncleRateOne,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::RegularRateOne, Scenario::RegularPlusUncleRateOne];

    pub fn number(self) -> u8 {
        match self {
            Scenario::RegularRateOne => 1,
            Scenario::RegularPlusUncleRateOne => 2,
        }
    }

    /// Block production rate the difficulty adjustment normalizes to one.
    pub fn denominator(self, r: &RevenueBreakdown) -> f64 {
        match self {
            Scenario::RegularRateOne => r.r_b_s + r.r_b_h,
            Scenario::RegularPlusUncleRateOne => r.r_b_s + r.r_b_h + r.uncle_count_rate,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "regular" => Ok(Scenario::RegularRateOne),
            "2" | "regular+uncle" => Ok(Scenario::RegularPlusUncleRateOne),
            _ => Err(format!("unknown scenario `{s}` (expected 1 or 2)")),
        }
    }
}

/// Pool and honest revenue per time unit after rescaling time for `scenario`.
pub fn absolute_revenue(breakdown: &RevenueBreakdown, scenario: Scenario) -> (f64, f64) {
    let d = scenario.denominator(breakdown);
    (breakdown.pool_total() / d, breakdown.honest_total() / d)
}

/// Pool share of all rewards paid out.
pub fn relative_share(breakdown: &RevenueBreakdown) -> f64 {
    breakdown.pool_total() / breakdown.r_total
}

/// Relative revenue of a selfish pool under static rewards only, in the
/// closed form known from the Bitcoin analysis.
pub fn eyal_sirer_relative_revenue(alpha: f64, gamma: f64) -> f64 {
    let a = alpha;
    let num = a * (1.0 - a).powi(2) * (4.0 * a + gamma * (1.0 - 2.0 * a)) - a.powi(3);
    let den = 1.0 - a * (1.0 + (2.0 - a) * a);
    num / den
}

/// Static-reward-only threshold `(1 - gamma) / (3 - 2 gamma)`.
pub fn eyal_sirer_threshold(gamma: f64) -> f64 {
    (1.0 - gamma) / (3.0 - 2.0 * gamma)
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdOptions {
    pub tolerance: f64,
    pub truncation: u32,
    pub lower: f64,
    pub upper: f64,
    pub scan_step: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            tolerance: 1e-6,
            truncation: DEFAULT_TRUNCATION,
            lower: 0.01,
            upper: 0.499,
            scan_step: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdOutcome {
    /// `U_s - alpha` changes sign inside `[alpha_star - w/2, alpha_star + w/2]`.
    Crossing {
        alpha_star: f64,
        bracket_width: f64,
    },
    /// Already profitable at the lower end of the search domain.
    AlwaysProfitable {
        from: f64,
    },
    NeverProfitable {
        up_to: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub gamma: f64,
    pub scenario: Scenario,
    pub schedule: String,
    pub outcome: ThresholdOutcome,
}

impl ThresholdResult {
    /// The threshold, with always-profitable reported as zero.
    pub fn alpha_star(&self) -> Option<f64> {
        match self.outcome {
            ThresholdOutcome::Crossing { alpha_star, .. } => Some(alpha_star),
            ThresholdOutcome::AlwaysProfitable { .. } => Some(0.0),
            ThresholdOutcome::NeverProfitable { .. } => None,
        }
    }

    pub fn bracket_width(&self) -> f64 {
        match self.outcome {
            ThresholdOutcome::Crossing { bracket_width, .. } => bracket_width,
            _ => 0.0,
        }
    }

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> io::Result<()> {
        let star = match self.outcome {
            ThresholdOutcome::NeverProfitable { .. } => "none".to_string(),
            _ => fmt9(self.alpha_star().unwrap_or(0.0)),
        };
        writeln!(w, "{},{},{},{},{}", fmt9(self.gamma), self.scenario, self.schedule, star, fmt9(self.bracket_width()))
    }
}

pub const THRESHOLD_CSV_HEADER: &str = "gamma,scenario,schedule,alpha_star,bracket_width";

/// Revenue breakdown for one configuration at the given truncation.
pub fn revenue_at(
    config: &MiningConfig,
    schedule: &RewardSchedule,
    truncation: u32,
) -> Result<RevenueBreakdown, RewardsError> {
    let dist = stationary_closed_form(config, truncation)?;
    aggregate_revenue(&dist, schedule)
}

/// Smallest pool size for which `U_s >= alpha`.
///
/// A coarse scan locates the first sign change of `U_s - alpha`, then
/// bisection narrows it to `options.tolerance`.
pub fn profitability_threshold(
    gamma: f64,
    schedule: &RewardSchedule,
    scenario: Scenario,
    options: ThresholdOptions,
) -> Result<ThresholdResult, RewardsError> {
    let gain = |alpha: f64| -> Result<f64, RewardsError> {
        let r = revenue_at(&MiningConfig::new(alpha, gamma), schedule, options.truncation)?;
        Ok(absolute_revenue(&r, scenario).0 - alpha)
    };
    let result = |outcome| ThresholdResult { gamma, scenario, schedule: schedule.tag(), outcome };

    let mut lo = options.lower;
    if gain(lo)? >= 0.0 {
        return Ok(result(ThresholdOutcome::AlwaysProfitable { from: lo }));
    }
    let steps = ((options.upper - options.lower) / options.scan_step).ceil() as usize;
    let mut hi = None;
    for k in 1..=steps {
        let a = (options.lower + k as f64 * options.scan_step).min(options.upper);
        if gain(a)? >= 0.0 {
            hi = Some(a);
            break;
        }
        lo = a;
    }
    let Some(mut hi) = hi else {
        return Ok(result(ThresholdOutcome::NeverProfitable { up_to: options.upper }));
    };
    while hi - lo > options.tolerance {
        let mid = 0.5 * (lo + hi);
        if gain(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(result(ThresholdOutcome::Crossing { alpha_star: 0.5 * (lo + hi), bracket_width: hi - lo }))
}

/// Threshold with static rewards only.
pub fn bitcoin_baseline_threshold(gamma: f64, options: ThresholdOptions) -> Result<ThresholdResult, RewardsError> {
    profitability_threshold(gamma, &RewardSchedule::bitcoin(), Scenario::RegularRateOne, options)
}

/// Thresholds for every combination, computed in parallel, in input order.
pub fn threshold_sweep(
    gammas: &[f64],
    schedules: &[RewardSchedule],
    scenarios: &[Scenario],
    options: ThresholdOptions,
) -> Result<Vec<ThresholdResult>, RewardsError> {
    let jobs: Vec<(f64, RewardSchedule, Scenario)> = schedules
        .iter()
        .flat_map(|s| scenarios.iter().flat_map(move |&sc| gammas.iter().map(move |&g| (g, *s, sc))))
        .collect();
    jobs.par_iter().map(|(g, s, sc)| profitability_threshold(*g, s, *sc, options)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Reward;

    fn rev(a: f64, g: f64, s: &RewardSchedule) -> RevenueBreakdown {
        revenue_at(&MiningConfig::new(a, g), s, 200).unwrap()
    }

    fn coarse() -> ThresholdOptions {
        ThresholdOptions { tolerance: 1e-4, truncation: 120, ..Default::default() }
    }

    #[test]
    fn tiny_pool_earns_nothing() {
        let r = rev(1e-9, 0.5, &RewardSchedule::ethereum());
        let (us, uh) = absolute_revenue(&r, Scenario::RegularRateOne);
        assert!(us < 1e-8);
        assert!((uh - 1.0).abs() < 1e-6);
        assert!(relative_share(&r) < 1e-8);
    }

    #[test]
    fn static_only_matches_known_formula() {
        for (a, g) in [(0.1, 0.0), (0.25, 0.5), (0.35, 0.9), (0.45, 0.3)] {
            let r = rev(a, g, &RewardSchedule::bitcoin());
            let (us, _) = absolute_revenue(&r, Scenario::RegularRateOne);
            assert!((us - eyal_sirer_relative_revenue(a, g)).abs() < 1e-9, "{a} {g}");
            assert_eq!(r.uncle_count_rate, 0.0);
        }
    }

    #[test]
    fn half_uncle_reward_profitable_at_forty_percent() {
        let r = rev(0.4, 0.5, &RewardSchedule::fixed(Reward::new(1, 2)));
        assert!(absolute_revenue(&r, Scenario::RegularRateOne).0 > 0.4);
        assert!(relative_share(&r) > 0.4 && relative_share(&r) < 1.0);
    }

    #[test]
    fn conservation_under_rescaling() {
        let r = rev(0.3, 0.5, &RewardSchedule::ethereum());
        for sc in Scenario::ALL {
            let (us, uh) = absolute_revenue(&r, sc);
            assert!((us + uh - r.r_total / sc.denominator(&r)).abs() < 1e-14);
        }
    }

    #[test]
    fn static_threshold_matches_closed_form() {
        for g in [0.0, 0.5] {
            let t = bitcoin_baseline_threshold(g, coarse()).unwrap();
            assert!((t.alpha_star().unwrap() - eyal_sirer_threshold(g)).abs() < 1e-4, "{t:?}");
        }
    }

    #[test]
    fn full_tie_advantage_always_profitable() {
        let t = bitcoin_baseline_threshold(1.0, coarse()).unwrap();
        assert_eq!(t.outcome, ThresholdOutcome::AlwaysProfitable { from: 0.01 });
        assert_eq!(t.alpha_star(), Some(0.0));
    }

    #[test]
    fn csv_row() {
        let t = ThresholdResult {
            gamma: 0.5,
            scenario: Scenario::RegularPlusUncleRateOne,
            schedule: "ethereum".into(),
            outcome: ThresholdOutcome::Crossing { alpha_star: 0.27, bracket_width: 1e-6 },
        };
        let mut buf = Vec::new();
        t.write_csv_row(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0.5,2,ethereum,0.27,1.00000000e-6\n");
    }
}
