//! One function per subcommand. Each writes its report into `out` and
//! returns whether the internal consistency checks passed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use serde::Serialize;

use ethsm::markov::{balance_residuals, stationary_closed_form, stationary_numeric, NumericOptions};
use ethsm::model::{ChainState, MiningConfig, RewardSchedule};
use ethsm::report::fmt9;
use ethsm::revenue::{
    absolute_revenue, relative_share, threshold_sweep, Scenario, ThresholdOptions, ThresholdOutcome, ThresholdResult,
};
use ethsm::rewards::{audit_revenue, RevenueBreakdown, AUDIT_TOLERANCE};
use ethsm::sim::{run_simulation, run_single, write_trace_line, RunChecks, SimOptions, SimResult, SIM_CSV_HEADER};

use crate::spec::{Format, Mode, SweepSpec};

/// Tail mass above which results are flagged as truncation-sensitive.
pub const TAIL_WARNING: f64 = 1e-9;

/// Fewer honest uncles than this make a distance histogram meaningless.
pub const MIN_UNCLE_SAMPLE: u64 = 100;

pub const HISTOGRAM_DISTANCES: u32 = 6;

#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: u64,
    pub truncation: u32,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Inconsistent(String),
}

impl Status {
    fn merge(self, other: Status) -> Status {
        match (self, other) {
            (Status::Ok, s) | (s, Status::Ok) => s,
            (Status::Inconsistent(a), Status::Inconsistent(b)) => Status::Inconsistent(format!("{a}; {b}")),
        }
    }
}

fn warn_tail(tail: f64, truncation: u32, alpha: f64) {
    if tail > TAIL_WARNING {
        eprintln!(
            "warning: tail mass bound {} at alpha={} with truncation {truncation}; results beyond this accuracy \
             need a larger --truncation",
            fmt9(tail),
            fmt9(alpha)
        );
    }
}

fn json<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn csv_line<W: Write>(out: &mut W, fields: &[String]) -> Result<()> {
    writeln!(out, "{}", fields.join(","))?;
    Ok(())
}

#[derive(Serialize)]
struct StateRow {
    i: u32,
    j: u32,
    closed: f64,
    numeric: f64,
}

#[derive(Serialize)]
struct StationaryReport {
    config: MiningConfig,
    truncation: u32,
    tail_mass_bound: f64,
    max_discrepancy: f64,
    worst_state: ChainState,
    max_balance_residual: f64,
    states: Vec<StateRow>,
}

pub const STATIONARY_CSV_HEADER: &str = "i,j,pi_closed,pi_numeric,abs_diff";

pub fn stationary<W: Write>(ctx: &Context, config: MiningConfig, out: &mut W) -> Result<Status> {
    let closed = stationary_closed_form(&config, ctx.truncation)?;
    let numeric = stationary_numeric(&config, ctx.truncation, NumericOptions::default())?;
    let (diff, worst) = closed.max_abs_diff(&numeric);
    let residual = balance_residuals(&closed);
    let tail = closed.tail_mass_bound;
    warn_tail(tail, ctx.truncation, config.alpha);

    match ctx.format {
        Format::Csv => {
            writeln!(out, "{STATIONARY_CSV_HEADER}")?;
            for ((s, p), (_, q)) in closed.iter().zip(numeric.iter()) {
                csv_line(out, &[s.l_s.to_string(), s.l_h.to_string(), fmt9(p), fmt9(q), fmt9((p - q).abs())])?;
            }
            eprintln!(
                "max discrepancy {} at {worst}; max balance residual {} at {}; tail mass bound {}",
                fmt9(diff),
                fmt9(residual.max_residual),
                residual.worst_state,
                fmt9(tail)
            );
        }
        Format::Json => {
            let states = closed
                .iter()
                .zip(numeric.iter())
                .map(|((s, p), (_, q))| StateRow { i: s.l_s, j: s.l_h, closed: p, numeric: q })
                .collect();
            let report = StationaryReport {
                config,
                truncation: ctx.truncation,
                tail_mass_bound: tail,
                max_discrepancy: diff,
                worst_state: worst,
                max_balance_residual: residual.max_residual,
                states,
            };
            json(out, &report)?;
        }
    }
    if diff > 1e-9 + tail {
        return Ok(Status::Inconsistent(format!(
            "closed form and numeric solve differ by {} at {worst}, beyond the tail bound {}",
            fmt9(diff),
            fmt9(tail)
        )));
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ScenarioRevenue {
    scenario: Scenario,
    u_s: f64,
    u_h: f64,
    total_normalized: f64,
}

#[derive(Serialize)]
struct RevenueReport {
    breakdown: RevenueBreakdown,
    relative_share: f64,
    scenarios: Vec<ScenarioRevenue>,
    audit_component: &'static str,
    audit_gap: f64,
    consistent: bool,
}

pub const REVENUE_CSV_HEADER: &str = "alpha,gamma,schedule,scenario,r_b_s,r_b_h,r_u_s,r_u_h,r_n_s,r_n_h,\
uncle_count_rate,r_total,u_s,u_h,relative_share,total_normalized,audit_gap,error_bar,status";

pub fn revenue<W: Write>(
    ctx: &Context,
    config: MiningConfig,
    schedule: RewardSchedule,
    scenarios: &[Scenario],
    out: &mut W,
) -> Result<Status> {
    let dist = stationary_closed_form(&config, ctx.truncation)?;
    warn_tail(dist.tail_mass_bound, ctx.truncation, config.alpha);
    let audit = audit_revenue(&dist, &schedule)?;
    let (component, gap) = audit.max_deviation();
    let b = audit.per_transition;
    let consistent = gap <= AUDIT_TOLERANCE + b.error_bar;
    let rows: Vec<ScenarioRevenue> = scenarios
        .iter()
        .map(|&sc| {
            let (u_s, u_h) = absolute_revenue(&b, sc);
            ScenarioRevenue { scenario: sc, u_s, u_h, total_normalized: b.r_total / sc.denominator(&b) }
        })
        .collect();

    match ctx.format {
        Format::Csv => {
            writeln!(out, "{REVENUE_CSV_HEADER}")?;
            for r in &rows {
                let mut fields =
                    vec![fmt9(config.alpha), fmt9(config.gamma), b.schedule.clone(), r.scenario.to_string()];
                fields.extend(b.components().iter().map(|&x| fmt9(x)));
                fields.extend([
                    fmt9(b.uncle_count_rate),
                    fmt9(b.r_total),
                    fmt9(r.u_s),
                    fmt9(r.u_h),
                    fmt9(relative_share(&b)),
                    fmt9(r.total_normalized),
                    fmt9(gap),
                    fmt9(b.error_bar),
                    if consistent { "ok" } else { "inconsistent" }.to_string(),
                ]);
                csv_line(out, &fields)?;
            }
        }
        Format::Json => {
            let report = RevenueReport {
                relative_share: relative_share(&b),
                breakdown: b.clone(),
                scenarios: rows,
                audit_component: component,
                audit_gap: gap,
                consistent,
            };
            json(out, &report)?;
        }
    }
    if !consistent {
        return Ok(Status::Inconsistent(format!(
            "{component} differs by {} between per-transition attribution and the closed form (allowed {})",
            fmt9(gap),
            fmt9(AUDIT_TOLERANCE + b.error_bar)
        )));
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ThresholdRow {
    #[serde(flatten)]
    result: ThresholdResult,
    alpha_star: Option<f64>,
    bitcoin_alpha_star: Option<f64>,
}

pub const THRESHOLD_CSV_HEADER: &str = "gamma,scenario,schedule,outcome,alpha_star,bracket_width,bitcoin_alpha_star";

fn outcome_label(o: &ThresholdOutcome) -> &'static str {
    match o {
        ThresholdOutcome::Crossing { .. } => "crossing",
        ThresholdOutcome::AlwaysProfitable { .. } => "always_profitable",
        ThresholdOutcome::NeverProfitable { .. } => "never_profitable",
    }
}

fn star(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), fmt9)
}

pub fn threshold<W: Write>(
    ctx: &Context,
    gammas: &[f64],
    schedules: &[RewardSchedule],
    scenarios: &[Scenario],
    options: ThresholdOptions,
    out: &mut W,
) -> Result<Status> {
    let results = threshold_sweep(gammas, schedules, scenarios, options)?;
    let baseline = threshold_sweep(gammas, &[RewardSchedule::bitcoin()], &[Scenario::RegularRateOne], options)?;
    let rows: Vec<ThresholdRow> = results
        .into_iter()
        .map(|r| {
            let k = gammas.iter().position(|g| *g == r.gamma).expect("gamma from input");
            ThresholdRow { alpha_star: r.alpha_star(), bitcoin_alpha_star: baseline[k].alpha_star(), result: r }
        })
        .collect();
    for r in &rows {
        match r.result.outcome {
            ThresholdOutcome::Crossing { .. } => {}
            ThresholdOutcome::AlwaysProfitable { from } => eprintln!(
                "note: no crossing at gamma={} for {} scenario {}: profitable from alpha={}",
                fmt9(r.result.gamma),
                r.result.schedule,
                r.result.scenario,
                fmt9(from)
            ),
            ThresholdOutcome::NeverProfitable { up_to } => eprintln!(
                "note: no crossing at gamma={} for {} scenario {}: unprofitable up to alpha={}",
                fmt9(r.result.gamma),
                r.result.schedule,
                r.result.scenario,
                fmt9(up_to)
            ),
        }
    }
    match ctx.format {
        Format::Csv => {
            writeln!(out, "{THRESHOLD_CSV_HEADER}")?;
            for r in &rows {
                csv_line(
                    out,
                    &[
                        fmt9(r.result.gamma),
                        r.result.scenario.to_string(),
                        r.result.schedule.clone(),
                        outcome_label(&r.result.outcome).to_string(),
                        star(r.alpha_star),
                        fmt9(r.result.bracket_width()),
                        star(r.bitcoin_alpha_star),
                    ],
                )?;
            }
        }
        Format::Json => json(out, &rows)?,
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub simulated: f64,
    pub std_error: f64,
    pub analytic: f64,
    pub z_score: f64,
}

/// Simulated estimates next to their analytic values.
pub fn compare(sim: &SimResult, analytic: &RevenueBreakdown) -> Vec<Comparison> {
    let mut rows: Vec<(String, ethsm::sim::Estimate, f64)> = vec![
        ("r_b_s".into(), sim.r_b_s, analytic.r_b_s),
        ("r_b_h".into(), sim.r_b_h, analytic.r_b_h),
        ("r_u_s".into(), sim.r_u_s, analytic.r_u_s),
        ("r_u_h".into(), sim.r_u_h, analytic.r_u_h),
        ("r_n_s".into(), sim.r_n_s, analytic.r_n_s),
        ("r_n_h".into(), sim.r_n_h, analytic.r_n_h),
        ("uncle_rate".into(), sim.uncle_rate, analytic.uncle_count_rate),
    ];
    for sc in Scenario::ALL {
        let (u_s, u_h) = absolute_revenue(analytic, sc);
        let e = sim.scenario(sc);
        rows.push((format!("u_s_scenario{sc}"), e.u_s, u_s));
        rows.push((format!("u_h_scenario{sc}"), e.u_h, u_h));
    }
    rows.into_iter()
        .map(|(quantity, est, analytic)| Comparison {
            quantity,
            simulated: est.mean,
            std_error: est.std_error,
            analytic,
            z_score: if est.std_error > 0.0 { est.z_score(analytic) } else { 0.0 },
        })
        .collect()
}

fn check_status(checks: &RunChecks) -> Status {
    let mut problems = Vec::new();
    if !checks.lemma1_holds || checks.lemma1_violations > 0 {
        problems.push(format!("{} pool blocks broke the lead-2 rule", checks.lemma1_violations));
    }
    if checks.pool_uncle_distance_violations > 0 {
        problems.push(format!("{} pool uncles beyond distance 1", checks.pool_uncle_distance_violations));
    }
    if checks.equal_length_violations > 0 {
        problems.push(format!("{} unequal public branches", checks.equal_length_violations));
    }
    if problems.is_empty() {
        Status::Ok
    } else {
        Status::Inconsistent(problems.join("; "))
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    simulation: &'a SimResult,
    checks: RunChecks,
    comparison: Option<Vec<Comparison>>,
}

pub fn simulate<W: Write>(
    ctx: &Context,
    config: MiningConfig,
    schedule: RewardSchedule,
    options: SimOptions,
    trace: Option<&Path>,
    out: &mut W,
) -> Result<Status> {
    let sim = run_simulation(&config, &schedule, &options)?;
    let analytic = if config.alpha > 0.0 && config.alpha < 0.5 {
        let dist = stationary_closed_form(&config, ctx.truncation)?;
        warn_tail(dist.tail_mass_bound, ctx.truncation, config.alpha);
        Some(audit_revenue(&dist, &schedule)?.per_transition)
    } else {
        eprintln!("note: no analytic comparison for alpha={} (outside (0, 0.5))", fmt9(config.alpha));
        None
    };
    let comparison = analytic.as_ref().map(|a| compare(&sim, a));
    let checks = sim.total_checks();

    if let Some(path) = trace {
        let (_, _, records) = run_single(&config, &schedule, &options, 0, true)?;
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        for r in &records {
            write_trace_line(&mut w, r)?;
        }
        w.flush()?;
    }

    match ctx.format {
        Format::Csv => {
            writeln!(out, "{SIM_CSV_HEADER}")?;
            sim.write_csv_row(&mut *out)?;
            if let Some(rows) = &comparison {
                eprintln!("quantity,simulated,std_error,analytic,z_score");
                for c in rows {
                    eprintln!(
                        "{},{},{},{},{}",
                        c.quantity,
                        fmt9(c.simulated),
                        fmt9(c.std_error),
                        fmt9(c.analytic),
                        fmt9(c.z_score)
                    );
                }
            }
        }
        Format::Json => json(out, &SimulateReport { simulation: &sim, checks, comparison })?,
    }
    Ok(check_status(&checks))
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub alpha: f64,
    pub gamma: f64,
    pub schedule: String,
    pub source: &'static str,
    pub distribution: Vec<f64>,
    pub expectation: f64,
    pub honest_uncles_per_block: f64,
    pub sample: Option<u64>,
}

pub const TABLE2_CSV_HEADER: &str =
    "alpha,gamma,schedule,source,d1,d2,d3,d4,d5,d6,expectation,honest_uncles_per_block,sample";

fn expectation(dist: &[f64]) -> f64 {
    dist.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum()
}

pub fn table2<W: Write>(
    ctx: &Context,
    alphas: &[f64],
    gamma: f64,
    schedule: RewardSchedule,
    mode: Mode,
    options: SimOptions,
    out: &mut W,
) -> Result<Status> {
    let mut rows = Vec::new();
    let mut status = Status::Ok;
    for &alpha in alphas {
        let config = MiningConfig::new(alpha, gamma);
        let analytic_ok = alpha > 0.0 && alpha < 0.5;
        if mode.analytic() && !analytic_ok && mode == Mode::Analytic {
            bail!("alpha out of range for stationary analysis: {alpha} not in (0, 0.5)");
        }
        if mode.analytic() && analytic_ok {
            let dist = stationary_closed_form(&config, ctx.truncation)?;
            warn_tail(dist.tail_mass_bound, ctx.truncation, alpha);
            let audit = audit_revenue(&dist, &schedule)?;
            let (component, gap) = audit.max_deviation();
            let b = audit.per_transition;
            if gap > AUDIT_TOLERANCE + b.error_bar {
                status = status.merge(Status::Inconsistent(format!(
                    "{component} audit gap {} at alpha={}",
                    fmt9(gap),
                    fmt9(alpha)
                )));
            }
            let distribution = b.honest_uncle_distribution(HISTOGRAM_DISTANCES);
            let head: f64 = b.honest_uncle_rates.iter().take(HISTOGRAM_DISTANCES as usize).sum();
            rows.push(HistogramRow {
                alpha,
                gamma,
                schedule: schedule.tag(),
                source: "analytic",
                expectation: expectation(&distribution),
                distribution,
                honest_uncles_per_block: head,
                sample: None,
            });
        } else if mode.analytic() {
            eprintln!("note: no analytic row for alpha={} (outside (0, 0.5))", fmt9(alpha));
        }
        if mode.simulate() {
            let sim = run_simulation(&config, &schedule, &options)?;
            status = status.merge(check_status(&sim.total_checks()));
            let count: u64 = sim.honest_uncle_distance.iter().take(HISTOGRAM_DISTANCES as usize).sum();
            if count < MIN_UNCLE_SAMPLE {
                eprintln!(
                    "notice: insufficient sample at alpha={}: {count} honest uncles in {} blocks, histogram not meaningful",
                    fmt9(alpha),
                    options.blocks * u64::from(options.runs)
                );
            }
            let distribution = sim.honest_uncle_distribution(HISTOGRAM_DISTANCES);
            rows.push(HistogramRow {
                alpha,
                gamma,
                schedule: schedule.tag(),
                source: "simulated",
                expectation: expectation(&distribution),
                distribution,
                honest_uncles_per_block: count as f64 / (options.blocks * u64::from(options.runs)) as f64,
                sample: Some(count),
            });
        }
    }
    match ctx.format {
        Format::Csv => {
            writeln!(out, "{TABLE2_CSV_HEADER}")?;
            for r in &rows {
                let mut fields = vec![fmt9(r.alpha), fmt9(r.gamma), r.schedule.clone(), r.source.to_string()];
                fields.extend(r.distribution.iter().map(|&p| fmt9(p)));
                fields.extend([
                    fmt9(r.expectation),
                    fmt9(r.honest_uncles_per_block),
                    r.sample.map_or_else(String::new, |n| n.to_string()),
                ]);
                csv_line(out, &fields)?;
            }
        }
        Format::Json => json(out, &rows)?,
    }
    Ok(status)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub gamma: f64,
    pub schedule: String,
    pub scenario: Scenario,
    pub source: &'static str,
    pub u_s: f64,
    pub u_s_se: Option<f64>,
    pub u_h: f64,
    pub u_h_se: Option<f64>,
    pub total_normalized: Option<f64>,
}

pub const SWEEP_CSV_HEADER: &str = "alpha,gamma,schedule,scenario,source,u_s,u_s_se,u_h,u_h_se,total_normalized";

fn sweep_cell(
    ctx: &Context,
    spec: &SweepSpec,
    (schedule, gamma, alpha): (RewardSchedule, f64, f64),
    options: SimOptions,
) -> Result<(Vec<SweepRow>, Status, f64)> {
    let config = MiningConfig::new(alpha, gamma);
    let mut rows = Vec::new();
    let mut status = Status::Ok;
    let mut tail = 0.0;
    if spec.mode.analytic() {
        let dist = stationary_closed_form(&config, ctx.truncation)?;
        tail = dist.tail_mass_bound;
        let audit = audit_revenue(&dist, &schedule)?;
        let (component, gap) = audit.max_deviation();
        let b = audit.per_transition;
        if gap > AUDIT_TOLERANCE + b.error_bar {
            status = Status::Inconsistent(format!(
                "{component} audit gap {} at alpha={} gamma={} {}",
                fmt9(gap),
                fmt9(alpha),
                fmt9(gamma),
                b.schedule
            ));
        }
        for &sc in &spec.scenarios {
            let (u_s, u_h) = absolute_revenue(&b, sc);
            rows.push(SweepRow {
                alpha,
                gamma,
                schedule: b.schedule.clone(),
                scenario: sc,
                source: "analytic",
                u_s,
                u_s_se: None,
                u_h,
                u_h_se: None,
                total_normalized: Some(b.r_total / sc.denominator(&b)),
            });
        }
    }
    if spec.mode.simulate() {
        let sim = run_simulation(&config, &schedule, &options)?;
        status = status.merge(check_status(&sim.total_checks()));
        for &sc in &spec.scenarios {
            let e = sim.scenario(sc);
            rows.push(SweepRow {
                alpha,
                gamma,
                schedule: sim.schedule.clone(),
                scenario: sc,
                source: "simulated",
                u_s: e.u_s.mean,
                u_s_se: Some(e.u_s.std_error),
                u_h: e.u_h.mean,
                u_h_se: Some(e.u_h.std_error),
                total_normalized: None,
            });
        }
    }
    Ok((rows, status, tail))
}

pub fn sweep<W: Write>(ctx: &Context, spec: &SweepSpec, options: SimOptions, out: &mut W) -> Result<Status> {
    if let Err(e) = spec.validate() {
        bail!("invalid sweep: {e}");
    }
    let cells = spec.cells();
    let results: Vec<(Vec<SweepRow>, Status, f64)> =
        cells.par_iter().map(|&c| sweep_cell(ctx, spec, c, options)).collect::<Result<_>>()?;

    let worst_tail = results.iter().map(|r| r.2).fold(0.0, f64::max);
    if worst_tail > TAIL_WARNING {
        eprintln!(
            "warning: tail mass bound up to {} with truncation {}; results beyond this accuracy need a larger --truncation",
            fmt9(worst_tail),
            ctx.truncation
        );
    }
    let mut status = Status::Ok;
    let mut rows = Vec::new();
    for (r, s, _) in results {
        rows.extend(r);
        status = status.merge(s);
    }
    match ctx.format {
        Format::Csv => {
            writeln!(out, "{SWEEP_CSV_HEADER}")?;
            let opt = |x: Option<f64>| x.map_or_else(String::new, fmt9);
            for r in &rows {
                csv_line(
                    out,
                    &[
                        fmt9(r.alpha),
                        fmt9(r.gamma),
                        r.schedule.clone(),
                        r.scenario.to_string(),
                        r.source.to_string(),
                        fmt9(r.u_s),
                        opt(r.u_s_se),
                        fmt9(r.u_h),
                        opt(r.u_h_se),
                        opt(r.total_normalized),
                    ],
                )?;
            }
        }
        Format::Json => json(out, &rows)?,
    }
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(format: Format) -> Context {
        Context { seed: 2019, truncation: 120, format }
    }

    fn text(buf: Vec<u8>) -> String {
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn stationary_csv_starts_at_origin() {
        let mut buf = Vec::new();
        let status = stationary(&ctx(Format::Csv), MiningConfig::new(0.4, 0.5), &mut buf).unwrap();
        assert_eq!(status, Status::Ok);
        let s = text(buf);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some(STATIONARY_CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&first[..2], ["0", "0"]);
        assert!((first[2].parse::<f64>().unwrap() - 0.409836066).abs() < 1e-9);
    }

    #[test]
    fn stationary_rejects_majority_pool() {
        let err = stationary(&ctx(Format::Csv), MiningConfig::new(0.6, 0.5), &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("alpha out of range for stationary analysis"), "{err}");
    }

    #[test]
    fn revenue_rows_per_scenario() {
        let mut buf = Vec::new();
        let status = revenue(
            &ctx(Format::Csv),
            MiningConfig::new(0.3, 0.5),
            RewardSchedule::ethereum(),
            &Scenario::ALL,
            &mut buf,
        )
        .unwrap();
        assert_eq!(status, Status::Ok);
        let s = text(buf);
        let width = REVENUE_CSV_HEADER.split(',').count();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == width && l.ends_with(",ok")));
    }

    #[test]
    fn status_merge() {
        let a = Status::Inconsistent("a".into());
        assert_eq!(Status::Ok.merge(Status::Ok), Status::Ok);
        assert_eq!(Status::Ok.merge(a.clone()), a);
        assert_eq!(a.clone().merge(Status::Inconsistent("b".into())), Status::Inconsistent("a; b".into()));
    }

    #[test]
    fn histogram_expectation() {
        assert!((expectation(&[0.5, 0.5, 0.0]) - 1.5).abs() < 1e-15);
    }
}
