//! Monte Carlo simulation of the strategy over an explicit block tree.
//!
//! Each run draws i.i.d. events (pool with probability `alpha`), applies them
//! with [`Simulator::replay_step`], and scores the blocks created by the first
//! `blocks` events. It then keeps going without scoring until every scored
//! block has its final status, so nothing is censored at the end of a run.

mod tree;

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ChainState, MiningConfig, RewardSchedule};
use crate::report::fmt9;
use crate::revenue::Scenario;

pub use tree::{
    verify_lemma1, Block, BlockId, BlockStatus, FinalizedTrace, Miner, SimEvent, Simulator, StepChecks, StepRecord,
};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("blocks must be at least 1")]
    NoBlocks,
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("alpha must lie in [0, 1), got {0}")]
    BadAlpha(f64),
    #[error("gamma must lie in [0, 1], got {0}")]
    BadGamma(f64),
    #[error("miner count must be at least 1")]
    NoMiners,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    pub blocks: u64,
    pub runs: u32,
    pub seed: u64,
    /// Draw the miner of each block uniformly from this many equal miners,
    /// `round(alpha * n)` of them in the pool, instead of a coin with bias `alpha`.
    pub miners: Option<u32>,
    pub max_uncles_per_block: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { blocks: 100_000, runs: 10, seed: 2019, miners: None, max_uncles_per_block: None }
    }
}

/// Reward and block totals of one run, over scored blocks only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Tallies {
    pub static_pool: f64,
    pub static_honest: f64,
    pub uncle_pool: f64,
    pub uncle_honest: f64,
    pub nephew_pool: f64,
    pub nephew_honest: f64,
    pub regular_blocks: u64,
    pub uncle_blocks: u64,
    pub stale_blocks: u64,
}

impl Tallies {
    fn add(&mut self, o: &Tallies) {
        self.static_pool += o.static_pool;
        self.static_honest += o.static_honest;
        self.uncle_pool += o.uncle_pool;
        self.uncle_honest += o.uncle_honest;
        self.nephew_pool += o.nephew_pool;
        self.nephew_honest += o.nephew_honest;
        self.regular_blocks += o.regular_blocks;
        self.uncle_blocks += o.uncle_blocks;
        self.stale_blocks += o.stale_blocks;
    }

    pub fn pool_total(&self) -> f64 {
        self.static_pool + self.uncle_pool + self.nephew_pool
    }

    pub fn honest_total(&self) -> f64 {
        self.static_honest + self.uncle_honest + self.nephew_honest
    }

    fn denominator(&self, scenario: Scenario) -> f64 {
        match scenario {
            Scenario::RegularRateOne => self.regular_blocks as f64,
            Scenario::RegularPlusUncleRateOne => (self.regular_blocks + self.uncle_blocks) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunChecks {
    pub lemma1_holds: bool,
    pub lemma1_violations: u64,
    pub pool_uncle_distance_violations: u64,
    pub equal_length_violations: u64,
    pub model_fidelity_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: u32,
    pub tallies: Tallies,
    /// Events drawn after the scored ones to settle all statuses.
    pub settle_events: u64,
    /// Honest uncles by distance, index `d - 1`.
    pub honest_uncle_distance: Vec<u64>,
    /// Scored events by pre-event state.
    pub state_occupancy: Vec<(ChainState, u64)>,
    pub checks: RunChecks,
}

/// Mean over runs with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std_error = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            f64::NAN
        };
        Estimate { mean, std_error }
    }

    pub fn z_score(&self, expected: f64) -> f64 {
        (self.mean - expected) / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioEstimate {
    pub scenario: Scenario,
    pub u_s: Estimate,
    pub u_h: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub config: MiningConfig,
    pub schedule: String,
    pub seed: u64,
    pub runs: u32,
    pub blocks_per_run: u64,
    pub blocks_generated: u64,
    pub miners: Option<u32>,
    /// Summed over runs.
    pub tallies: Tallies,
    pub r_b_s: Estimate,
    pub r_b_h: Estimate,
    pub r_u_s: Estimate,
    pub r_u_h: Estimate,
    pub r_n_s: Estimate,
    pub r_n_h: Estimate,
    pub regular_rate: Estimate,
    pub uncle_rate: Estimate,
    pub scenarios: Vec<ScenarioEstimate>,
    /// Honest uncles by distance over all runs, index `d - 1`.
    pub honest_uncle_distance: Vec<u64>,
    pub per_run: Vec<RunSummary>,
}

impl SimResult {
    pub fn scenario(&self, scenario: Scenario) -> &ScenarioEstimate {
        self.scenarios.iter().find(|s| s.scenario == scenario).expect("both scenarios estimated")
    }

    pub fn lemma1_holds(&self) -> bool {
        self.per_run.iter().all(|r| r.checks.lemma1_holds)
    }

    pub fn total_checks(&self) -> RunChecks {
        let mut c = RunChecks { lemma1_holds: self.lemma1_holds(), ..Default::default() };
        for r in &self.per_run {
            c.lemma1_violations += r.checks.lemma1_violations;
            c.pool_uncle_distance_violations += r.checks.pool_uncle_distance_violations;
            c.equal_length_violations += r.checks.equal_length_violations;
            c.model_fidelity_events += r.checks.model_fidelity_events;
        }
        c
    }

    /// Honest uncle shares at distances `1..=max`, normalized over that range.
    pub fn honest_uncle_distribution(&self, max: u32) -> Vec<f64> {
        let head: Vec<f64> =
            (0..max as usize).map(|d| self.honest_uncle_distance.get(d).copied().unwrap_or(0) as f64).collect();
        let total: f64 = head.iter().sum();
        head.iter().map(|c| if total > 0.0 { c / total } else { 0.0 }).collect()
    }

    /// Empirical share of scored events spent in `state`, pooled over runs.
    pub fn occupancy(&self, state: ChainState) -> Estimate {
        let xs: Vec<f64> = self
            .per_run
            .iter()
            .map(|r| {
                let c = r.state_occupancy.iter().find(|(s, _)| *s == state).map_or(0, |(_, c)| *c);
                c as f64 / self.blocks_per_run as f64
            })
            .collect();
        Estimate::from_samples(&xs)
    }

    pub fn write_csv_row<W: Write>(&self, mut w: W) -> io::Result<()> {
        let s1 = self.scenario(Scenario::RegularRateOne);
        let s2 = self.scenario(Scenario::RegularPlusUncleRateOne);
        let fields = [
            fmt9(self.config.alpha),
            fmt9(self.config.gamma),
            self.schedule.clone(),
            self.seed.to_string(),
            self.runs.to_string(),
            self.blocks_per_run.to_string(),
            fmt9(self.r_b_s.mean),
            fmt9(self.r_b_h.mean),
            fmt9(self.r_u_s.mean),
            fmt9(self.r_u_h.mean),
            fmt9(self.r_n_s.mean),
            fmt9(self.r_n_h.mean),
            fmt9(self.uncle_rate.mean),
            fmt9(s1.u_s.mean),
            fmt9(s1.u_s.std_error),
            fmt9(s1.u_h.mean),
            fmt9(s1.u_h.std_error),
            fmt9(s2.u_s.mean),
            fmt9(s2.u_s.std_error),
            fmt9(s2.u_h.mean),
            fmt9(s2.u_h.std_error),
        ];
        writeln!(w, "{}", fields.join(","))
    }
}

pub const SIM_CSV_HEADER: &str =
    "alpha,gamma,schedule,seed,runs,blocks,r_b_s,r_b_h,r_u_s,r_u_h,r_n_s,r_n_h,uncle_rate,\
u_s_1,u_s_1_se,u_h_1,u_h_1_se,u_s_2,u_s_2_se,u_h_2,u_h_2_se";

fn validate(config: &MiningConfig, options: &SimOptions) -> Result<(), SimError> {
    if options.blocks == 0 {
        return Err(SimError::NoBlocks);
    }
    if options.runs == 0 {
        return Err(SimError::NoRuns);
    }
    if options.miners == Some(0) {
        return Err(SimError::NoMiners);
    }
    if !(0.0..1.0).contains(&config.alpha) {
        return Err(SimError::BadAlpha(config.alpha));
    }
    if !(0.0..=1.0).contains(&config.gamma) {
        return Err(SimError::BadGamma(config.gamma));
    }
    Ok(())
}

/// Settling events after which the pool releases a private branch leading by
/// two or more. Without it a pool above one half may never return to `(0,0)`.
pub const SETTLE_LIMIT: u64 = 10_000;

/// Random source for one run: the seed picks the key, the run picks the stream.
pub fn run_rng(seed: u64, run: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(run));
    rng
}

fn draw(rng: &mut ChaCha8Rng, config: &MiningConfig, miners: Option<u32>) -> SimEvent {
    let pool = match miners {
        Some(n) => {
            let in_pool = (config.alpha * f64::from(n)).round() as u32;
            rng.random_range(0..n) < in_pool
        }
        None => rng.random_bool(config.alpha),
    };
    if pool {
        SimEvent::PoolBlock
    } else {
        SimEvent::HonestBlock { on_pool_branch: rng.random_bool(config.gamma) }
    }
}

/// Execute one run, returning its summary, the finalized tree, and the
/// per-event records when `trace` is set.
pub fn run_single(
    config: &MiningConfig,
    schedule: &RewardSchedule,
    options: &SimOptions,
    run: u32,
    trace: bool,
) -> Result<(RunSummary, FinalizedTrace, Vec<StepRecord>), SimError> {
    validate(config, options)?;
    let mut rng = run_rng(options.seed, run);
    let mut sim = Simulator::new(*config, *schedule).with_uncle_cap(options.max_uncles_per_block);
    let mut records = Vec::new();
    let mut occupancy = std::collections::BTreeMap::<(u32, u32), u64>::new();
    let n = options.blocks;
    while sim.events() < n || sim.state() != ChainState::ORIGIN || sim.has_pending_candidates(n) {
        if sim.events() < n {
            let s = sim.state();
            *occupancy.entry((s.l_s, s.l_h)).or_default() += 1;
        }
        if sim.events() >= n + SETTLE_LIMIT && sim.release_private().is_some() {
            continue;
        }
        let event = draw(&mut rng, config, options.miners);
        let record = sim.replay_step(event);
        if trace {
            records.push(record);
        }
    }
    let settle_events = sim.events() - n;
    let finalized = sim.finalize();

    let mut tallies = Tallies::default();
    let mut hist = Vec::new();
    let mut lemma1_violations = 0;
    for b in finalized.blocks.iter().skip(1).filter(|b| b.created_at < n) {
        let pool = b.miner == Miner::Pool;
        if b.pre_state.lead() >= 2 && (b.status == BlockStatus::Regular) != pool {
            lemma1_violations += 1;
        }
        match b.status {
            BlockStatus::Regular => {
                tallies.regular_blocks += 1;
                if pool {
                    tallies.static_pool += 1.0;
                } else {
                    tallies.static_honest += 1.0;
                }
            }
            BlockStatus::Uncle(d) => {
                tallies.uncle_blocks += 1;
                let ku = schedule.uncle_reward_f64(d);
                let kn = schedule.nephew_reward_f64(d);
                if pool {
                    tallies.uncle_pool += ku;
                } else {
                    tallies.uncle_honest += ku;
                    if hist.len() < d as usize {
                        hist.resize(d as usize, 0);
                    }
                    hist[d as usize - 1] += 1;
                }
                let nephew = finalized.nephew[b.id as usize].expect("uncles have a nephew");
                if finalized.blocks[nephew as usize].miner == Miner::Pool {
                    tallies.nephew_pool += kn;
                } else {
                    tallies.nephew_honest += kn;
                }
            }
            BlockStatus::Stale => tallies.stale_blocks += 1,
            BlockStatus::Pending => unreachable!("finalized"),
        }
    }
    let checks = RunChecks {
        lemma1_holds: verify_lemma1(&finalized),
        lemma1_violations,
        pool_uncle_distance_violations: finalized.pool_uncle_distance_violations,
        equal_length_violations: finalized.checks.equal_length_violations,
        model_fidelity_events: finalized.checks.model_fidelity_events,
    };
    let summary = RunSummary {
        run,
        tallies,
        settle_events,
        honest_uncle_distance: hist,
        state_occupancy: occupancy.into_iter().map(|((i, j), c)| (ChainState::new(i, j), c)).collect(),
        checks,
    };
    Ok((summary, finalized, records))
}

/// Run `options.runs` independent runs in parallel and aggregate them in run order.
pub fn run_simulation(
    config: &MiningConfig,
    schedule: &RewardSchedule,
    options: &SimOptions,
) -> Result<SimResult, SimError> {
    validate(config, options)?;
    let per_run: Vec<RunSummary> = (0..options.runs)
        .into_par_iter()
        .map(|run| run_single(config, schedule, options, run, false).map(|(s, _, _)| s))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(config, schedule, options, per_run))
}

fn aggregate(
    config: &MiningConfig,
    schedule: &RewardSchedule,
    options: &SimOptions,
    per_run: Vec<RunSummary>,
) -> SimResult {
    let n = options.blocks as f64;
    let est = |f: &dyn Fn(&Tallies) -> f64| {
        Estimate::from_samples(&per_run.iter().map(|r| f(&r.tallies)).collect::<Vec<_>>())
    };
    let mut tallies = Tallies::default();
    let mut hist: Vec<u64> = Vec::new();
    for r in &per_run {
        tallies.add(&r.tallies);
        if hist.len() < r.honest_uncle_distance.len() {
            hist.resize(r.honest_uncle_distance.len(), 0);
        }
        for (h, c) in hist.iter_mut().zip(&r.honest_uncle_distance) {
            *h += c;
        }
    }
    let scenarios = Scenario::ALL
        .iter()
        .map(|&sc| ScenarioEstimate {
            scenario: sc,
            u_s: est(&|t| t.pool_total() / t.denominator(sc)),
            u_h: est(&|t| t.honest_total() / t.denominator(sc)),
        })
        .collect();
    SimResult {
        config: *config,
        schedule: schedule.tag(),
        seed: options.seed,
        runs: options.runs,
        blocks_per_run: options.blocks,
        blocks_generated: options.blocks * u64::from(options.runs),
        miners: options.miners,
        tallies,
        r_b_s: est(&|t| t.static_pool / n),
        r_b_h: est(&|t| t.static_honest / n),
        r_u_s: est(&|t| t.uncle_pool / n),
        r_u_h: est(&|t| t.uncle_honest / n),
        r_n_s: est(&|t| t.nephew_pool / n),
        r_n_h: est(&|t| t.nephew_honest / n),
        regular_rate: est(&|t| t.regular_blocks as f64 / n),
        uncle_rate: est(&|t| t.uncle_blocks as f64 / n),
        scenarios,
        honest_uncle_distance: hist,
        per_run,
    }
}

/// One trace line: index, event, pre-state, post-state, published ids, references.
pub fn write_trace_line<W: Write>(mut w: W, r: &StepRecord) -> io::Result<()> {
    let ids = |v: &[BlockId]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let refs = r.references.iter().map(|(n, u)| format!("{n}->{u}")).collect::<Vec<_>>().join(" ");
    writeln!(w, "{}\t{}\t{}\t{}\t[{}]\t[{}]", r.index, r.event.label(), r.pre, r.post, ids(&r.published), refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::stationary_closed_form;
    use crate::revenue::absolute_revenue;
    use crate::rewards::aggregate_revenue;

    fn opts(blocks: u64, runs: u32, seed: u64) -> SimOptions {
        SimOptions { blocks, runs, seed, ..Default::default() }
    }

    #[test]
    fn rejects_bad_counts() {
        let c = MiningConfig::new(0.3, 0.5);
        let s = RewardSchedule::ethereum();
        assert_eq!(run_simulation(&c, &s, &opts(0, 1, 1)).unwrap_err(), SimError::NoBlocks);
        assert_eq!(run_simulation(&c, &s, &opts(10, 0, 1)).unwrap_err(), SimError::NoRuns);
    }

    #[test]
    fn same_seed_same_result() {
        let c = MiningConfig::new(0.35, 0.5);
        let s = RewardSchedule::ethereum();
        let a = run_simulation(&c, &s, &opts(5_000, 3, 7)).unwrap();
        let b = run_simulation(&c, &s, &opts(5_000, 3, 7)).unwrap();
        assert_eq!(a, b);
        let d = run_simulation(&c, &s, &opts(5_000, 3, 8)).unwrap();
        assert_ne!(a.tallies, d.tallies);
    }

    #[test]
    fn runs_use_distinct_streams() {
        let c = MiningConfig::new(0.3, 0.5);
        let r = run_simulation(&c, &RewardSchedule::ethereum(), &opts(2_000, 2, 1)).unwrap();
        assert_ne!(r.per_run[0].tallies, r.per_run[1].tallies);
    }

    #[test]
    fn invariants_hold_under_stress() {
        let c = MiningConfig::new(0.45, 0.0);
        let r = run_simulation(&c, &RewardSchedule::ethereum(), &opts(50_000, 2, 3)).unwrap();
        let checks = r.total_checks();
        assert!(checks.lemma1_holds);
        assert_eq!(checks.lemma1_violations, 0);
        assert_eq!(checks.pool_uncle_distance_violations, 0);
        assert_eq!(checks.equal_length_violations, 0);
        assert_eq!(checks.model_fidelity_events, 0);
    }

    #[test]
    fn static_only_small_pool_loses() {
        let c = MiningConfig::new(0.1, 0.5);
        let r = run_simulation(&c, &RewardSchedule::bitcoin(), &opts(50_000, 4, 11)).unwrap();
        assert!(r.scenario(Scenario::RegularRateOne).u_s.mean < 0.1);
        assert_eq!(r.tallies.uncle_blocks, 0);
    }

    #[test]
    fn rates_track_analysis() {
        let c = MiningConfig::new(0.3, 0.5);
        let s = RewardSchedule::ethereum();
        let sim = run_simulation(&c, &s, &opts(40_000, 8, 5)).unwrap();
        let an = aggregate_revenue(&stationary_closed_form(&c, 200).unwrap(), &s).unwrap();
        let pairs = [
            (sim.r_b_s, an.r_b_s),
            (sim.r_b_h, an.r_b_h),
            (sim.r_u_s, an.r_u_s),
            (sim.r_u_h, an.r_u_h),
            (sim.r_n_s, an.r_n_s),
            (sim.r_n_h, an.r_n_h),
            (sim.uncle_rate, an.uncle_count_rate),
        ];
        for (k, (e, want)) in pairs.iter().enumerate() {
            assert!(e.z_score(*want).abs() < 4.0, "component {k}: {e:?} vs {want}");
        }
        let (us, _) = absolute_revenue(&an, Scenario::RegularRateOne);
        assert!((sim.scenario(Scenario::RegularRateOne).u_s.mean - us).abs() < 0.01);
    }

    #[test]
    fn occupancy_matches_stationary() {
        let c = MiningConfig::new(0.35, 0.5);
        let sim = run_simulation(&c, &RewardSchedule::ethereum(), &opts(40_000, 8, 9)).unwrap();
        let dist = stationary_closed_form(&c, 200).unwrap();
        for (s, p) in dist.iter().filter(|(_, p)| *p >= 1e-3) {
            let e = sim.occupancy(s);
            assert!(e.z_score(p).abs() < 4.0, "{s}: {e:?} vs {p}");
        }
    }

    #[test]
    fn majority_pool_run_terminates() {
        let c = MiningConfig::new(0.6, 0.5);
        let r = run_simulation(&c, &RewardSchedule::ethereum(), &opts(20_000, 2, 4)).unwrap();
        assert!(r.r_b_s.mean > 0.55);
        assert!(r.lemma1_holds());
        assert!(r.per_run.iter().all(|run| run.settle_events >= SETTLE_LIMIT));
    }

    #[test]
    fn discrete_miner_mode_runs() {
        let c = MiningConfig::new(0.3, 0.5);
        let o = SimOptions { miners: Some(1000), ..opts(5_000, 2, 1) };
        let r = run_simulation(&c, &RewardSchedule::ethereum(), &o).unwrap();
        assert!(r.lemma1_holds());
        assert_eq!(r.miners, Some(1000));
    }

    #[test]
    fn trace_lines() {
        let c = MiningConfig::new(0.4, 0.5);
        let (_, _, records) = run_single(&c, &RewardSchedule::ethereum(), &opts(50, 1, 2), 0, true).unwrap();
        assert!(records.len() >= 50);
        let mut buf = Vec::new();
        write_trace_line(&mut buf, &records[0]).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert!(line.starts_with("0\t"));
        assert_eq!(line.trim_end().split('\t').count(), 6);
    }
}
