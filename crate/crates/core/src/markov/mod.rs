//! The two-dimensional `(L_s, L_h)` Markov chain of the selfish-mining strategy.
//!
//! Time is rescaled so that blocks are found at total rate 1: the pool at rate
//! `alpha`, honest miners at rate `beta`. Every state therefore has outgoing
//! rate exactly 1 and the continuous-time chain shares its stationary
//! distribution with the embedded jump chain.

mod closed_form;
mod multisum;
mod numeric;

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::{ChainState, MiningConfig};
use crate::report::fmt9;

pub use closed_form::stationary_closed_form;
pub use multisum::{multisum_f, MultisumTable};
pub use numeric::{stationary_numeric, NumericOptions};

/// Truncation used throughout: states with `l_s` above this are dropped.
pub const DEFAULT_TRUNCATION: u32 = 200;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("alpha out of range for stationary analysis: {0} not in (0, 0.5)")]
    AlphaOutOfRange(f64),
    #[error("gamma out of range: {0} not in [0, 1]")]
    GammaOutOfRange(f64),
    #[error("state {0} is not reachable")]
    Unreachable(ChainState),
    #[error("truncation {got} too small (need at least {min})")]
    TruncationTooSmall { got: u32, min: u32 },
    #[error("tail mass bound {bound:e} still above {target:e} at truncation {truncation}")]
    TailNotCertified { truncation: u32, bound: f64, target: f64 },
    #[error("numeric solve did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },
}

/// Which block produced a transition and, when two public branches exist,
/// whether the honest block extended the pool's published prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    PoolBlock,
    /// Honest block when only one public branch exists, or at the `(1,1)` tie
    /// where the branch choice does not change the outcome.
    HonestBlock,
    HonestBlockOnPrefix,
    HonestBlockOffPrefix,
}

impl EventKind {
    pub fn is_pool(self) -> bool {
        self == EventKind::PoolBlock
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionRate {
    pub from: ChainState,
    pub to: ChainState,
    pub rate: f64,
    pub event_kind: EventKind,
}

pub(crate) fn check_analytic(config: &MiningConfig) -> Result<(), MarkovError> {
    if !config.is_analytic() {
        return Err(MarkovError::AlphaOutOfRange(config.alpha));
    }
    if !(0.0..=1.0).contains(&config.gamma) {
        return Err(MarkovError::GammaOutOfRange(config.gamma));
    }
    Ok(())
}

/// Every outgoing transition of `state` with positive rate.
///
/// States with lead 2 and a non-empty public branch emit two honest entries
/// (on and off the prefix) that share the target `(0,0)`; the split matters
/// for reward attribution only.
pub fn transition_rates(state: ChainState, config: &MiningConfig) -> Result<Vec<TransitionRate>, MarkovError> {
    if !state.is_reachable() {
        return Err(MarkovError::Unreachable(state));
    }
    let (a, b, g) = (config.alpha, config.beta(), config.gamma);
    let (i, j) = (state.l_s, state.l_h);
    let t = |to: (u32, u32), rate: f64, event_kind| TransitionRate {
        from: state,
        to: ChainState::new(to.0, to.1),
        rate,
        event_kind,
    };
    use EventKind::*;
    let mut out = match (i, j) {
        (0, 0) => vec![t((0, 0), b, HonestBlock), t((1, 0), a, PoolBlock)],
        (1, 0) => vec![t((2, 0), a, PoolBlock), t((1, 1), b, HonestBlock)],
        (1, 1) => vec![t((0, 0), a, PoolBlock), t((0, 0), b, HonestBlock)],
        _ if i - j == 2 && j == 0 => vec![t((3, 0), a, PoolBlock), t((0, 0), b, HonestBlock)],
        _ if j == 0 => vec![t((i + 1, 0), a, PoolBlock), t((i, 1), b, HonestBlock)],
        _ if i - j == 2 => vec![
            t((i + 1, j), a, PoolBlock),
            t((0, 0), b * g, HonestBlockOnPrefix),
            t((0, 0), b * (1.0 - g), HonestBlockOffPrefix),
        ],
        _ => vec![
            t((i + 1, j), a, PoolBlock),
            t((i - j, 1), b * g, HonestBlockOnPrefix),
            t((i, j + 1), b * (1.0 - g), HonestBlockOffPrefix),
        ],
    };
    out.retain(|tr| tr.rate > 0.0);
    Ok(out)
}

/// Outgoing rates merged by target state, in the order targets first appear.
pub fn rates_by_target(state: ChainState, config: &MiningConfig) -> Result<Vec<(ChainState, f64)>, MarkovError> {
    let mut merged: Vec<(ChainState, f64)> = Vec::new();
    for tr in transition_rates(state, config)? {
        match merged.iter_mut().find(|(s, _)| *s == tr.to) {
            Some((_, r)) => *r += tr.rate,
            None => merged.push((tr.to, tr.rate)),
        }
    }
    Ok(merged)
}

/// Dense numbering of the reachable states with `l_s <= truncation`:
/// `(0,0)`, `(1,0)`, `(1,1)`, then column by column in increasing `l_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateIndex {
    truncation: u32,
}

impl StateIndex {
    pub fn new(truncation: u32) -> Self {
        StateIndex { truncation }
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        Self::column_start(self.truncation + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the first state in column `i >= 2`.
    fn column_start(i: u32) -> usize {
        match i {
            0 => 0,
            1 => 1,
            2 => 3,
            _ => 3 + ((i as usize - 2) * (i as usize - 1)) / 2,
        }
    }

    pub fn index(&self, s: ChainState) -> Option<usize> {
        if s.l_s > self.truncation || !s.is_reachable() {
            return None;
        }
        Some(match (s.l_s, s.l_h) {
            (0, 0) => 0,
            (1, 0) => 1,
            (1, 1) => 2,
            (i, j) => Self::column_start(i) + j as usize,
        })
    }

    pub fn state(&self, idx: usize) -> ChainState {
        match idx {
            0 => ChainState::new(0, 0),
            1 => ChainState::new(1, 0),
            2 => ChainState::new(1, 1),
            _ => {
                let mut i = 2u32;
                while Self::column_start(i + 1) <= idx {
                    i += 1;
                }
                ChainState::new(i, (idx - Self::column_start(i)) as u32)
            }
        }
    }

    pub fn states(&self) -> impl Iterator<Item = ChainState> + '_ {
        let head = [ChainState::new(0, 0), ChainState::new(1, 0), ChainState::new(1, 1)];
        head.into_iter().chain((2..=self.truncation).flat_map(|i| (0..=i - 2).map(move |j| ChainState::new(i, j))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Closed,
    Numeric,
}

impl SolveMethod {
    pub fn tag(self) -> &'static str {
        match self {
            SolveMethod::Closed => "closed",
            SolveMethod::Numeric => "numeric",
        }
    }
}

/// Stationary probabilities over the retained states plus a bound on the
/// mass lying beyond the truncation.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub config: MiningConfig,
    pub method: SolveMethod,
    index: StateIndex,
    pi: Vec<f64>,
    pub tail_mass_bound: f64,
}

impl StationaryDistribution {
    pub(crate) fn new(config: MiningConfig, method: SolveMethod, index: StateIndex, pi: Vec<f64>) -> Self {
        let tail_mass_bound = tail_bound(&config, &index, &pi);
        StationaryDistribution { config, method, index, pi, tail_mass_bound }
    }

    pub fn truncation(&self) -> u32 {
        self.index.truncation()
    }

    pub fn index(&self) -> &StateIndex {
        &self.index
    }

    /// Probability of `state`, zero for unreachable or truncated states.
    pub fn get(&self, state: ChainState) -> f64 {
        self.index.index(state).map_or(0.0, |k| self.pi[k])
    }

    #[inline]
    pub fn at(&self, l_s: u32, l_h: u32) -> f64 {
        self.get(ChainState::new(l_s, l_h))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChainState, f64)> + '_ {
        self.index.states().zip(self.pi.iter().copied())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    pub fn total_mass(&self) -> f64 {
        // Summed smallest-first to keep the rounding error near one ulp.
        let mut v = self.pi.clone();
        v.sort_by(f64::total_cmp);
        v.iter().sum()
    }

    /// Largest per-state absolute difference and where it occurs.
    pub fn max_abs_diff(&self, other: &StationaryDistribution) -> (f64, ChainState) {
        let mut worst = (0.0, ChainState::ORIGIN);
        for (s, p) in self.iter() {
            let d = (p - other.get(s)).abs();
            if d > worst.0 {
                worst = (d, s);
            }
        }
        worst
    }

    /// CSV rows `i,j,pi,method`, without a header.
    pub fn write_csv_rows<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (s, p) in self.iter() {
            writeln!(w, "{},{},{},{}", s.l_s, s.l_h, fmt9(p), self.method.tag())?;
        }
        Ok(())
    }
}

pub const DISTRIBUTION_CSV_HEADER: &str = "i,j,pi,method";

/// Mass beyond column `N` is entered only by a pool block out of column `N`
/// (rate `alpha * c_N`), and each excursion ends within the expected time for
/// the lead, at most `N + 1`, to drain at net speed `1 - 2 alpha`.
fn tail_bound(config: &MiningConfig, index: &StateIndex, pi: &[f64]) -> f64 {
    let n = index.truncation();
    if n < 2 {
        return 1.0;
    }
    let start = StateIndex::column_start(n);
    let last_column: f64 = pi[start..].iter().map(|p| p.abs()).sum();
    config.alpha * last_column * f64::from(n) / (1.0 - 2.0 * config.alpha)
}

/// Largest truncation tried by [`stationary_certified`].
pub const MAX_CERTIFIED_TRUNCATION: u32 = 4000;

/// Stationary distribution at the smallest truncation, starting from
/// `truncation` and growing by half each time, whose tail bound is at most
/// `max_tail`. The closed form is used at the starting truncation and the
/// numeric solver beyond it, where the multisum values overflow `f64`.
pub fn stationary_certified(
    config: &MiningConfig,
    truncation: u32,
    max_tail: f64,
) -> Result<StationaryDistribution, MarkovError> {
    let mut n = truncation;
    let mut dist = stationary_closed_form(config, n)?;
    while dist.tail_mass_bound > max_tail {
        if n >= MAX_CERTIFIED_TRUNCATION {
            return Err(MarkovError::TailNotCertified { truncation: n, bound: dist.tail_mass_bound, target: max_tail });
        }
        n = (n + n / 2).min(MAX_CERTIFIED_TRUNCATION);
        dist = stationary_numeric(config, n, NumericOptions::default())?;
    }
    Ok(dist)
}

/// Residuals of the truncated global balance equations: for each retained
/// state, `|inflow from retained states - pi(s)|` (outflow rate is 1).
#[derive(Debug, Clone, Copy)]
pub struct BalanceReport {
    pub max_residual: f64,
    pub worst_state: ChainState,
}

pub fn balance_residuals(dist: &StationaryDistribution) -> BalanceReport {
    let idx = dist.index;
    let mut inflow = vec![0.0; idx.len()];
    for (k, s) in idx.states().enumerate() {
        let p = dist.pi[k];
        for tr in transition_rates(s, &dist.config).expect("retained states are reachable") {
            if let Some(t) = idx.index(tr.to) {
                inflow[t] += p * tr.rate;
            }
        }
    }
    let mut report = BalanceReport { max_residual: 0.0, worst_state: ChainState::ORIGIN };
    for (k, s) in idx.states().enumerate() {
        let r = (inflow[k] - dist.pi[k]).abs();
        if r > report.max_residual {
            report = BalanceReport { max_residual: r, worst_state: s };
        }
    }
    report
}
