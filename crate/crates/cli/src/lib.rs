//! Command-line front end for the `chainq` library.

pub mod commands;
pub mod config_file;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use chainq::simulator::{SourceModel, DEFAULT_SLOTS};
use chainq::sweep::{Axis, Evaluator, Objective, SweepSpec};
use clap::{Parser, Subcommand, ValueEnum};

use commands::{Context, SimArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] chainq::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.root() {
                chainq::Error::InvalidParameter(_) => 2,
                chainq::Error::Guard { .. } => 4,
                _ => 3,
            },
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "chainq", version, about = "Markov analysis and simulation of edge computing service chains")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML system configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct SimFlags {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SLOTS)]
    slots: u64,
    /// Slots discarded before statistics start (default: 1% of --slots).
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, value_enum, default_value_t = SourceArg::Independent)]
    source_model: SourceArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Independent,
    StopAndWait,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    Throughput,
    Delay,
    Drop,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvaluatorArg {
    Analytic,
    Sim,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic KPIs per queue and for the system.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Also write the steady state of every subsystem.
        #[arg(long)]
        steady_state: bool,
    },
    /// Slot-level simulation of the whole network.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Sweep one parameter over a grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// alpha, alpha1, alpha2, p, p1, p2, mu<N> or m<N>.
        #[arg(long, default_value = "alpha")]
        axis: String,
        /// `start:step:end` or a comma-separated list (default 0:0.05:1).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Throughput)]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value_t = EvaluatorArg::Analytic)]
        evaluator: EvaluatorArg,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Throughput, delay and drop rate over a (mu, M) grid with mu3 = mu4 = mu5 = mu and M1..M5 = M.
    Region {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu_grid: String,
        #[arg(long)]
        m_grid: String,
    },
    /// Exact joint chain vs simulation vs decomposition on one configuration.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Override every buffer size.
        #[arg(long)]
        buffers: Option<usize>,
        #[command(flatten)]
        sim: SimFlags,
    },
}

/// Parses `start:step:end` (inclusive) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Config(format!("invalid grid `{spec}`: {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, end] => {
            let (start, step, end) = (num(start)?, num(step)?, num(end)?);
            if step <= 0.0 || end < start {
                return Err(bad("need step > 0 and end >= start"));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            // Round away accumulated binary noise such as 0.30000000000000004.
            (0..=n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
        }
        [_] => spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad("expected start:step:end or a list")),
    };
    if grid.is_empty() {
        return Err(bad("empty"));
    }
    Ok(grid)
}

fn parse_axis(s: &str) -> Result<Axis, CliError> {
    let queue = |rest: &str| commands::parse_queue(rest).ok_or_else(|| CliError::Config(format!("unknown axis `{s}`")));
    Ok(match s {
        "alpha" => Axis::Alpha,
        "alpha1" => Axis::AlphaOf(0),
        "alpha2" => Axis::AlphaOf(1),
        "p" => Axis::P,
        "p1" => Axis::P1,
        "p2" => Axis::P2,
        _ if s.starts_with("mu") => Axis::Mu(queue(&s[2..])?),
        _ if s.starts_with('m') => Axis::Buffer(queue(&s[1..])?),
        _ => return Err(CliError::Config(format!("unknown axis `{s}`"))),
    })
}

fn sim_args(f: &SimFlags) -> SimArgs {
    SimArgs {
        seed: f.seed,
        slots: f.slots,
        warmup: f.warmup,
        source_model: match f.source_model {
            SourceArg::Independent => SourceModel::IndependentBernoulli,
            SourceArg::StopAndWait => SourceModel::StopAndWait,
        },
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let (name, common) = match &cli.command {
        Command::Analyze { common, .. } => ("analyze", common),
        Command::Simulate { common, .. } => ("simulate", common),
        Command::Sweep { common, .. } => ("sweep", common),
        Command::Region { common, .. } => ("region", common),
        Command::Validate { common, .. } => ("validate", common),
    };
    let (config_text, system) = config_file::load_system(&common.config)?;
    let ctx = Context {
        subcommand: name,
        config_path: &common.config,
        config_text,
        system,
        started,
    };
    match &cli.command {
        Command::Analyze { common, steady_state } => commands::analyze_cmd(&ctx, &common.out, *steady_state),
        Command::Simulate { common, sim } => commands::simulate_cmd(&ctx, &common.out, &sim_args(sim)),
        Command::Sweep {
            common,
            axis,
            grid,
            objective,
            evaluator,
            sim,
        } => {
            let grid = match grid {
                Some(g) => parse_grid(g)?,
                None => chainq::sweep::default_alpha_grid(),
            };
            let args = sim_args(sim);
            let spec = SweepSpec {
                base: ctx.system.clone(),
                axis: parse_axis(axis)?,
                grid,
                objective: match objective {
                    ObjectiveArg::Throughput => Objective::Throughput,
                    ObjectiveArg::Delay => Objective::Delay,
                    ObjectiveArg::Drop => Objective::DropRate,
                },
                evaluator: match evaluator {
                    EvaluatorArg::Analytic => Evaluator::Analytic,
                    EvaluatorArg::Sim => Evaluator::Simulation {
                        seed: args.seed,
                        n_slots: args.slots,
                        warmup: args.warmup.unwrap_or(chainq::simulator::default_warmup(args.slots)),
                    },
                },
            };
            commands::sweep_cmd(&ctx, &common.out, &spec)
        }
        Command::Region { common, mu_grid, m_grid } => {
            let mu = parse_grid(mu_grid)?;
            let m = parse_grid(m_grid)?
                .into_iter()
                .map(|v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(CliError::Config(format!("buffer size {v} is not a positive integer")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            commands::region_cmd(&ctx, &common.out, &mu, &m)
        }
        Command::Validate { common, buffers, sim } => {
            commands::validate_cmd(&ctx, &common.out, *buffers, &sim_args(sim))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:0.05:1").unwrap().len(), 21);
        assert_eq!(parse_grid("0.1:0.1:0.3").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(parse_grid("0.2, 0.5").unwrap(), vec![0.2, 0.5]);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn axes() {
        assert_eq!(parse_axis("mu3").unwrap(), Axis::Mu(chainq::config::QueueId(3)));
        assert_eq!(parse_axis("m6").unwrap(), Axis::Buffer(chainq::config::QueueId(6)));
        assert_eq!(parse_axis("alpha2").unwrap(), Axis::AlphaOf(1));
        assert!(parse_axis("beta").is_err());
    }
}
