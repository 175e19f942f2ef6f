mod commands;
mod config;
mod oracle;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fres_core::runtime::{parse_uav_schedule, Method, RefineMode};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "fres", version, about = "IRS/UAV edge-computing scheduler simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the online scheduler and write per-slot records and a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// fres or fres-single.
        #[arg(long, default_value = "fres")]
        method: Method,
    },
    /// Run several methods on matched seeds and summarize them.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// QPB enumeration, LTS-vs-optimum and gradient self-checks.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Cluster the UEs and report the UAV positions.
    Placement {
        #[command(flatten)]
        common: Common,
    },
    /// Report the beamformed gain of every UE/UAV pair.
    QpbDemo {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config and $FRES_OUTPUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed to run; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    ues: Option<usize>,
    /// Constant UAV count for the whole episode.
    #[arg(long, conflicts_with = "uav_schedule")]
    uavs: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    /// `slot:m` pairs, e.g. `0:3,1000:4,1500:3`.
    #[arg(long)]
    uav_schedule: Option<String>,
    /// on-violation, always or every-<k>.
    #[arg(long)]
    refine_mode: Option<RefineMode>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(n) = self.ues {
            cfg.episode.ues = n;
            cfg.oracle.max_ues = n;
        }
        if let Some(m) = self.uavs {
            cfg.episode.uav_schedule = vec![(0, m)];
            cfg.oracle.max_uavs = m;
        }
        if let Some(s) = &self.uav_schedule {
            cfg.episode.uav_schedule = parse_uav_schedule(s)?;
        }
        if let Some(t) = self.slots {
            cfg.episode.slots = t;
        }
        if let Some(mode) = self.refine_mode {
            cfg.episode.refine = mode;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { common, method } => {
            let cfg = common.resolve()?;
            commands::train(&cfg, method, common.out.as_deref())?;
        }
        Command::Compare { common, methods } => {
            let mut cfg = common.resolve()?;
            if !methods.is_empty() {
                cfg.methods = methods;
            }
            commands::compare(&cfg, common.out.as_deref())?;
        }
        Command::OracleCheck { common, corrupt_gradient } => {
            let cfg = common.resolve()?;
            let faults = oracle::Faults { corrupt_gradient };
            return commands::oracle_check(&cfg, faults, common.out.as_deref());
        }
        Command::Placement { common } => {
            let cfg = common.resolve()?;
            commands::placement(&cfg, common.out.as_deref())?;
        }
        Command::QpbDemo { common } => {
            let cfg = common.resolve()?;
            commands::qpb_demo(&cfg, common.out.as_deref())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
