//! Expected rewards of each new block and their aggregation into revenue
//! rates.
//!
//! A block created by a transition out of `(i, j)` ends up regular, as a
//! referenced uncle, or as a plain stale block. Its miner collects the static
//! or uncle reward; the miner of the first main-chain block that references
//! it collects the nephew reward. [`attribute_transition`] computes these
//! expectations for one transition and [`aggregate_revenue`] weighs them by
//! stationary flow.
//!
//! The same rates also have closed forms in terms of a handful of stationary
//! probabilities. [`audit_revenue`] evaluates both and reports any mismatch.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::markov::{transition_rates, EventKind, MarkovError, StationaryDistribution};
use crate::model::{ChainState, MiningConfig, RewardSchedule};
use crate::report::fmt9;

/// Agreement required between the per-transition and closed-form paths.
pub const AUDIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum RewardsError {
    #[error("{kind:?} is not a transition out of state {state}")]
    InvalidTransition { state: ChainState, kind: EventKind },
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("model consistency failure: {component} is {per_transition:e} per transition but {closed_form:e} in closed form")]
    Inconsistent { component: &'static str, per_transition: f64, closed_form: f64 },
}

/// Expected fate and rewards of the block created by one transition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RewardAttribution {
    pub p_regular: f64,
    /// Probability the block becomes an uncle that is actually referenced.
    pub p_uncle: f64,
    /// Height difference to the block that would reference it.
    pub uncle_distance: Option<u32>,
    pub static_to_pool: f64,
    pub static_to_honest: f64,
    pub uncle_to_pool: f64,
    pub uncle_to_honest: f64,
    pub nephew_to_pool: f64,
    pub nephew_to_honest: f64,
    /// Probability that the referencing block is the pool's.
    pub p_nephew_pool: f64,
    pub p_nephew_honest: f64,
}

impl RewardAttribution {
    fn regular(pool: bool) -> Self {
        let mut a = RewardAttribution { p_regular: 1.0, ..Default::default() };
        if pool {
            a.static_to_pool = 1.0;
        } else {
            a.static_to_honest = 1.0;
        }
        a
    }

    fn stale() -> Self {
        RewardAttribution::default()
    }

    /// A block that becomes an uncle at `distance` with probability
    /// `p_uncle`, referenced by the pool with probability `p_nephew_pool`.
    fn uncle(
        schedule: &RewardSchedule,
        pool_mined: bool,
        distance: u32,
        p_uncle: f64,
        p_nephew_pool: f64,
        p_nephew_honest: f64,
    ) -> Self {
        let mut a = RewardAttribution { uncle_distance: Some(distance), ..Default::default() };
        if !schedule.references(distance) {
            return a;
        }
        let ku = schedule.uncle_reward_f64(distance);
        let kn = schedule.nephew_reward_f64(distance);
        a.p_uncle = p_uncle;
        if pool_mined {
            a.uncle_to_pool = p_uncle * ku;
        } else {
            a.uncle_to_honest = p_uncle * ku;
        }
        a.p_nephew_pool = p_nephew_pool;
        a.p_nephew_honest = p_nephew_honest;
        a.nephew_to_pool = p_nephew_pool * kn;
        a.nephew_to_honest = p_nephew_honest * kn;
        a
    }

    pub fn total(&self) -> f64 {
        self.static_to_pool
            + self.static_to_honest
            + self.uncle_to_pool
            + self.uncle_to_honest
            + self.nephew_to_pool
            + self.nephew_to_honest
    }
}

/// Probability that honest miners, rather than the pool, mine the first
/// main-chain block able to reference an honest uncle at `distance >= 2`.
///
/// Once the pool has published its whole branch the state is `(0,0)` and the
/// next main-chain block is honest with probability `beta (1 + alpha beta (1 - gamma))`.
/// Before that, every pool block mined in the remaining `distance - 2` steps
/// would pick the uncle up itself.
pub fn honest_nephew_probability(config: &MiningConfig, distance: u32) -> f64 {
    let (a, b, g) = (config.alpha, config.beta(), config.gamma);
    b.powi(distance as i32 - 2) * b * (1.0 + a * b * (1.0 - g))
}

/// Rewards of the block created by a `kind` event in `state`.
pub fn attribute_transition(
    state: ChainState,
    kind: EventKind,
    config: &MiningConfig,
    schedule: &RewardSchedule,
) -> Result<RewardAttribution, RewardsError> {
    let valid = transition_rates(state, config)?.iter().any(|t| t.event_kind == kind) || valid_zero_rate(state, kind);
    if !valid {
        return Err(RewardsError::InvalidTransition { state, kind });
    }
    let (a, b, g) = (config.alpha, config.beta(), config.gamma);
    let (i, j) = (state.l_s, state.l_h);
    use EventKind::*;
    Ok(match (i, j, kind) {
        (0, 0, HonestBlock) => RewardAttribution::regular(false),
        // Kept private; lost only if honest miners win the tie on their own branch.
        (0, 0, PoolBlock) => {
            let p_uncle = b * b * (1.0 - g);
            let mut at = RewardAttribution::uncle(schedule, true, 1, p_uncle, 0.0, p_uncle);
            at.p_regular = a + a * b + b * b * g;
            at.static_to_pool = at.p_regular;
            at
        }
        // The tie: the pool's block wins against its own mining and gamma of
        // the honest power, and is then referenced by whoever mined the winner.
        (1, 0, HonestBlock) => {
            let p_uncle = a + b * g;
            let mut at = RewardAttribution::uncle(schedule, false, 1, p_uncle, a, b * g);
            at.p_regular = b * (1.0 - g);
            at.static_to_honest = at.p_regular;
            at
        }
        (_, _, PoolBlock) => RewardAttribution::regular(true),
        (1, 1, _) => RewardAttribution::regular(false),
        // Honest block against a private lead: always an uncle, since the
        // published pool branch eventually overtakes it.
        (i, 0, HonestBlock) => honest_uncle(schedule, config, i),
        (i, j, HonestBlockOnPrefix) => honest_uncle(schedule, config, i - j),
        (_, _, HonestBlockOffPrefix) => RewardAttribution::stale(),
        _ => return Err(RewardsError::InvalidTransition { state, kind }),
    })
}

fn honest_uncle(schedule: &RewardSchedule, config: &MiningConfig, distance: u32) -> RewardAttribution {
    let ph = honest_nephew_probability(config, distance);
    RewardAttribution::uncle(schedule, false, distance, 1.0, 1.0 - ph, ph)
}

// Branches dropped from the rate list because gamma is 0 or 1 are still
// well-defined events.
fn valid_zero_rate(state: ChainState, kind: EventKind) -> bool {
    state.l_h >= 1
        && state.lead() >= 2
        && matches!(kind, EventKind::HonestBlockOnPrefix | EventKind::HonestBlockOffPrefix)
}

/// Long-run reward rates per unit time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevenueBreakdown {
    pub config: MiningConfig,
    pub schedule: String,
    pub r_b_s: f64,
    pub r_b_h: f64,
    pub r_u_s: f64,
    pub r_u_h: f64,
    pub r_n_s: f64,
    pub r_n_h: f64,
    /// Referenced uncles created per unit time.
    pub uncle_count_rate: f64,
    pub r_total: f64,
    /// Bound on the contribution of states beyond the truncation.
    pub error_bar: f64,
    /// Honest referenced uncles per unit time, indexed by distance minus one.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub honest_uncle_rates: Vec<f64>,
}

pub const COMPONENTS: [&str; 6] = ["r_b_s", "r_b_h", "r_u_s", "r_u_h", "r_n_s", "r_n_h"];

impl RevenueBreakdown {
    fn empty(dist: &StationaryDistribution, schedule: &RewardSchedule) -> Self {
        RevenueBreakdown {
            config: dist.config,
            schedule: schedule.tag(),
            r_b_s: 0.0,
            r_b_h: 0.0,
            r_u_s: 0.0,
            r_u_h: 0.0,
            r_n_s: 0.0,
            r_n_h: 0.0,
            uncle_count_rate: 0.0,
            r_total: 0.0,
            error_bar: dist.tail_mass_bound * (1.0 + schedule.max_reference_reward()),
            honest_uncle_rates: Vec::new(),
        }
    }

    pub fn components(&self) -> [f64; 6] {
        [self.r_b_s, self.r_b_h, self.r_u_s, self.r_u_h, self.r_n_s, self.r_n_h]
    }

    pub fn pool_total(&self) -> f64 {
        self.r_b_s + self.r_u_s + self.r_n_s
    }

    pub fn honest_total(&self) -> f64 {
        self.r_b_h + self.r_u_h + self.r_n_h
    }

    fn finish(mut self) -> Self {
        self.r_total = self.components().iter().sum();
        self
    }

    /// Share of honest uncles at each distance `1..=max`, normalized over that range.
    pub fn honest_uncle_distribution(&self, max: u32) -> Vec<f64> {
        let head: Vec<f64> =
            (0..max as usize).map(|d| self.honest_uncle_rates.get(d).copied().unwrap_or(0.0)).collect();
        let total: f64 = head.iter().sum();
        head.iter().map(|r| if total > 0.0 { r / total } else { 0.0 }).collect()
    }

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut fields = vec![fmt9(self.config.alpha), fmt9(self.config.gamma), self.schedule.clone()];
        fields.extend(self.components().iter().map(|&x| fmt9(x)));
        fields.push(fmt9(self.uncle_count_rate));
        fields.push(fmt9(self.r_total));
        writeln!(w, "{}", fields.join(","))
    }
}

pub const REVENUE_CSV_HEADER: &str =
    "alpha,gamma,schedule,r_b_s,r_b_h,r_u_s,r_u_h,r_n_s,r_n_h,uncle_count_rate,r_total";

/// Revenue rates as the stationary flow through every transition times its attribution.
pub fn aggregate_per_transition(
    dist: &StationaryDistribution,
    schedule: &RewardSchedule,
) -> Result<RevenueBreakdown, RewardsError> {
    let config = dist.config;
    let mut out = RevenueBreakdown::empty(dist, schedule);
    let mut hist = vec![0.0; dist.truncation() as usize + 1];
    for (s, p) in dist.iter() {
        for tr in transition_rates(s, &config)? {
            let at = attribute_transition(s, tr.event_kind, &config, schedule)?;
            let flow = p * tr.rate;
            out.r_b_s += flow * at.static_to_pool;
            out.r_b_h += flow * at.static_to_honest;
            out.r_u_s += flow * at.uncle_to_pool;
            out.r_u_h += flow * at.uncle_to_honest;
            out.r_n_s += flow * at.nephew_to_pool;
            out.r_n_h += flow * at.nephew_to_honest;
            out.uncle_count_rate += flow * at.p_uncle;
            if let (Some(d), false) = (at.uncle_distance, tr.event_kind.is_pool()) {
                hist[d as usize - 1] += flow * at.p_uncle;
            }
        }
    }
    while hist.last() == Some(&0.0) {
        hist.pop();
    }
    out.honest_uncle_rates = hist;
    Ok(out.finish())
}

/// Which closed form to use for the nephew rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NephewForm {
    /// Includes honest uncles created in `(i, 0)` states and uses the same
    /// nephew probabilities as [`attribute_transition`].
    Consistent,
    /// The commonly quoted expressions, which leave out the `(i, 0)` uncles
    /// and weigh the pool's share by `alpha - alpha beta^2 (1 - gamma)`.
    Literal,
}

/// Revenue rates from the closed-form sums over the stationary distribution.
pub fn aggregate_closed_form(
    dist: &StationaryDistribution,
    schedule: &RewardSchedule,
    form: NephewForm,
) -> RevenueBreakdown {
    let c = dist.config;
    let (a, b, g) = (c.alpha, c.beta(), c.gamma);
    let n = dist.truncation();
    let (p00, p10, p11) = (dist.at(0, 0), dist.at(1, 0), dist.at(1, 1));
    let ku = |d: u32| schedule.uncle_reward_f64(d);
    let kn = |d: u32| schedule.nephew_reward_f64(d);
    let h = |d: u32| honest_nephew_probability(&c, d);
    let mut out = RevenueBreakdown::empty(dist, schedule);

    out.r_b_s = a - a * b * b * (1.0 - g) * p00;
    out.r_b_h = b * (p00 + p11) + b * b * (1.0 - g) * p10;
    out.r_u_s = a * b * b * (1.0 - g) * ku(1) * p00;

    // Honest uncles at distance d >= 2: column (d, 0) at rate beta, and
    // states (d + j, j) at rate beta gamma.
    let column = |d: u32| dist.at(d, 0);
    let diagonal = |d: u32| (1..=n.saturating_sub(d)).map(|j| dist.at(d + j, j)).sum::<f64>();
    out.r_u_h = (a * b + b * b * g) * ku(1) * p10;
    out.uncle_count_rate =
        if schedule.references(1) { a * b * b * (1.0 - g) * p00 + (a * b + b * b * g) * p10 } else { 0.0 };
    for d in 2..=n {
        let flow = b * column(d) + b * g * diagonal(d);
        out.r_u_h += ku(d) * flow;
        if schedule.references(d) {
            out.uncle_count_rate += flow;
        }
    }

    match form {
        NephewForm::Consistent => {
            out.r_n_s = a * b * kn(1) * p10;
            out.r_n_h = a * b * b * (1.0 - g) * kn(1) * p00 + b * b * g * kn(1) * p10;
            for d in 2..=n {
                let flow = b * column(d) + b * g * diagonal(d);
                out.r_n_s += (1.0 - h(d)) * kn(d) * flow;
                out.r_n_h += h(d) * kn(d) * flow;
            }
        }
        NephewForm::Literal => {
            out.r_n_s = a * b * kn(1) * p10;
            out.r_n_h = a * b * b * (1.0 - g) * kn(1) * p00 + b * b * g * kn(1) * p10;
            for d in 2..=n {
                let diag = diagonal(d);
                out.r_n_s += b.powi(d as i32 - 1) * g * (a - a * b * b * (1.0 - g)) * kn(d) * diag;
                out.r_n_h += b.powi(d as i32) * g * (1.0 + a * b * (1.0 - g)) * kn(d) * diag;
            }
        }
    }
    out.finish()
}

/// Both computation paths side by side.
#[derive(Debug, Clone)]
pub struct RevenueAudit {
    pub per_transition: RevenueBreakdown,
    pub closed_form: RevenueBreakdown,
    pub literal: RevenueBreakdown,
}

impl RevenueAudit {
    /// Largest component gap between the per-transition and closed-form paths.
    pub fn max_deviation(&self) -> (&'static str, f64) {
        worst_gap(&self.per_transition, &self.closed_form)
    }

    /// Largest component gap against the literal nephew expressions.
    pub fn literal_deviation(&self) -> (&'static str, f64) {
        worst_gap(&self.per_transition, &self.literal)
    }
}

fn worst_gap(x: &RevenueBreakdown, y: &RevenueBreakdown) -> (&'static str, f64) {
    let mut worst = ("r_b_s", 0.0);
    for (k, (p, q)) in x.components().iter().zip(y.components()).enumerate() {
        if (p - q).abs() > worst.1 {
            worst = (COMPONENTS[k], (p - q).abs());
        }
    }
    let dc = (x.uncle_count_rate - y.uncle_count_rate).abs();
    if dc > worst.1 {
        worst = ("uncle_count_rate", dc);
    }
    worst
}

pub fn audit_revenue(dist: &StationaryDistribution, schedule: &RewardSchedule) -> Result<RevenueAudit, RewardsError> {
    Ok(RevenueAudit {
        per_transition: aggregate_per_transition(dist, schedule)?,
        closed_form: aggregate_closed_form(dist, schedule, NephewForm::Consistent),
        literal: aggregate_closed_form(dist, schedule, NephewForm::Literal),
    })
}

/// Per-transition revenue rates, checked against the closed form.
///
/// The closed-form static rates describe the untruncated chain, so the check
/// allows the truncation error bar on top of [`AUDIT_TOLERANCE`].
pub fn aggregate_revenue(
    dist: &StationaryDistribution,
    schedule: &RewardSchedule,
) -> Result<RevenueBreakdown, RewardsError> {
    let per_transition = aggregate_per_transition(dist, schedule)?;
    let closed = aggregate_closed_form(dist, schedule, NephewForm::Consistent);
    let (component, gap) = worst_gap(&per_transition, &closed);
    if gap > AUDIT_TOLERANCE + per_transition.error_bar {
        let pick = |r: &RevenueBreakdown| match component {
            "uncle_count_rate" => r.uncle_count_rate,
            c => r.components()[COMPONENTS.iter().position(|x| *x == c).unwrap()],
        };
        return Err(RewardsError::Inconsistent {
            component,
            per_transition: pick(&per_transition),
            closed_form: pick(&closed),
        });
    }
    Ok(per_transition)
}
