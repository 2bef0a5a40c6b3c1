//! `ethsm`: stationary distributions, revenue, thresholds and simulations of
//! selfish mining under uncle and nephew rewards.

mod commands;
mod spec;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};

use ethsm::markov::DEFAULT_TRUNCATION;
use ethsm::model::{ConfigFile, MiningConfig, RewardSchedule};
use ethsm::revenue::{Scenario, ThresholdOptions};
use ethsm::sim::SimOptions;

use commands::{Context, Status};
use spec::{AlphaRange, Format, Mode, SweepSpec};

#[derive(Parser)]
#[command(name = "ethsm", version, about = "Selfish mining analysis with uncle and nephew rewards")]
struct Cli {
    /// TOML file with alpha, gamma and the reward schedule; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 2019)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Defaults to json for `simulate`, csv otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true, default_value_t = DEFAULT_TRUNCATION, value_parser = clap::value_parser!(u32).range(2..))]
    truncation: u32,
    #[arg(long, global = true, env = "ETHSM_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Point {
    #[arg(long)]
    alpha: Option<f64>,
    /// Defaults to 0.5.
    #[arg(long)]
    gamma: Option<f64>,
    /// `ethereum`, `bitcoin`, `fixed:<k>` or `fixed-unlimited:<k>`, e.g. `fixed:4/8`.
    #[arg(long)]
    schedule: Option<RewardSchedule>,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    blocks: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    runs: u32,
    /// Draw each block's miner from this many equal miners instead of a biased coin.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    miners: Option<u32>,
    #[arg(long)]
    max_uncles_per_block: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and numeric stationary distributions side by side.
    Stationary(Point),
    /// Revenue rates and absolute revenue for one configuration.
    Revenue {
        #[command(flatten)]
        point: Point,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        scenario: Vec<Scenario>,
    },
    /// Profitability thresholds with the static-reward baseline.
    Threshold {
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        schedules: Vec<RewardSchedule>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        scenarios: Vec<Scenario>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Block-tree simulation with the analytic comparison appended.
    Simulate {
        #[command(flatten)]
        point: Point,
        #[command(flatten)]
        sim: SimArgs,
        /// Dump run 0 event by event to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Honest uncle distance histograms.
    Table2 {
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.45")]
        alphas: Vec<f64>,
        #[command(flatten)]
        point: Point,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Revenue over a grid of pool sizes, tie advantages and schedules.
    Sweep {
        #[arg(long, default_value = "0.05:0.45:0.05")]
        alpha_range: AlphaRange,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        schedules: Vec<RewardSchedule>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        scenarios: Vec<Scenario>,
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        #[command(flatten)]
        sim: SimArgs,
    },
}

/// Values from `--config`, before flags are applied.
#[derive(Default)]
struct Base {
    alpha: Option<f64>,
    gamma: Option<f64>,
    schedule: Option<RewardSchedule>,
}

impl Base {
    fn load(path: Option<&PathBuf>) -> Result<Base> {
        let Some(path) = path else { return Ok(Base::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v = ConfigFile::parse(&text)?.resolve()?;
        Ok(Base { alpha: Some(v.config.alpha), gamma: Some(v.config.gamma), schedule: Some(v.schedule) })
    }

    fn gamma(&self, p: &Point) -> f64 {
        p.gamma.or(self.gamma).unwrap_or(0.5)
    }

    fn schedule(&self, p: &Point) -> RewardSchedule {
        p.schedule.or(self.schedule).unwrap_or_default()
    }

    fn schedules(&self, given: Vec<RewardSchedule>) -> Vec<RewardSchedule> {
        if given.is_empty() {
            vec![self.schedule.unwrap_or_default()]
        } else {
            given
        }
    }

    fn resolve(&self, p: &Point) -> Result<(MiningConfig, RewardSchedule)> {
        let alpha = p.alpha.or(self.alpha).context("no pool size given: pass --alpha or --config")?;
        let gamma = self.gamma(p);
        if !(0.0..=1.0).contains(&gamma) {
            anyhow::bail!("gamma out of range: {gamma} not in [0, 1]");
        }
        Ok((MiningConfig::new(alpha, gamma), self.schedule(p)))
    }
}

fn sim_options(seed: u64, a: &SimArgs) -> SimOptions {
    SimOptions { blocks: a.blocks, runs: a.runs, seed, miners: a.miners, max_uncles_per_block: a.max_uncles_per_block }
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global()?;
    }
    let base = Base::load(cli.config.as_ref())?;
    let default_format = match cli.command {
        Command::Simulate { .. } => Format::Json,
        _ => Format::Csv,
    };
    let ctx = Context { seed: cli.seed, truncation: cli.truncation, format: cli.format.unwrap_or(default_format) };
    let mut buf = Vec::new();

    let status = match cli.command {
        Command::Stationary(p) => {
            let (config, _) = base.resolve(&p)?;
            commands::stationary(&ctx, config, &mut buf)?
        }
        Command::Revenue { point, scenario } => {
            let (config, schedule) = base.resolve(&point)?;
            commands::revenue(&ctx, config, schedule, &scenario, &mut buf)?
        }
        Command::Threshold { gammas, schedules, scenarios, tolerance } => {
            let options = ThresholdOptions { tolerance, truncation: ctx.truncation, ..Default::default() };
            commands::threshold(&ctx, &gammas, &base.schedules(schedules), &scenarios, options, &mut buf)?
        }
        Command::Simulate { point, sim, trace } => {
            let (config, schedule) = base.resolve(&point)?;
            commands::simulate(&ctx, config, schedule, sim_options(ctx.seed, &sim), trace.as_deref(), &mut buf)?
        }
        Command::Table2 { alphas, point, sim, mode } => {
            let gamma = base.gamma(&point);
            let schedule = base.schedule(&point);
            commands::table2(&ctx, &alphas, gamma, schedule, mode, sim_options(ctx.seed, &sim), &mut buf)?
        }
        Command::Sweep { alpha_range, gammas, schedules, scenarios, mode, sim } => {
            let spec =
                SweepSpec { alpha_range, gamma_list: gammas, schedules: base.schedules(schedules), scenarios, mode };
            commands::sweep(&ctx, &spec, sim_options(ctx.seed, &sim), &mut buf)?
        }
    };

    match &cli.out {
        Some(path) => fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?,
        None => match io::stdout().lock().write_all(&buf) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Inconsistent(msg)) => {
            eprintln!("error: consistency check failed: {msg}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
