//! Command-line front end for the PPSO valuation laboratory.
//!
//! Exit status: 0 when every executed check passed, 1 when a check failed
//! or an artifact could not be written, 2 for configuration errors.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::{parse_sweep_entry, RunConfig};

#[derive(Parser)]
#[command(
    name = "ppso",
    about = "Valuation laboratory for participating policies with surrender options",
    version
)]
struct Cli {
    /// Flat key-value configuration file (TOML syntax)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,
    /// Output directory (default: $PPSO_OUT or ./out)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<std::path::PathBuf>,
    /// Number of time steps for lattice valuations
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,
    /// Number of Monte Carlo paths
    #[arg(long, global = true, value_name = "M")]
    paths: Option<u64>,
    /// Monte Carlo seed
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Management fee rates as `p,q`
    #[arg(long, global = true, value_name = "P,Q")]
    fees: Option<String>,
    /// Generic override `key=value` (repeatable); keys match the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cone-tree prices (American, European, surrender-option premium)
    Price,
    /// Full-grid solve, boundary extraction and geometry validation
    Boundary,
    /// The nine scenario-by-spread valuations vs the reference prices
    Table1,
    /// Boundary sweeps over alpha, gamma and the guarantee rate
    Sensitivity {
        /// Sweep spec `name=v1,v2,...` (repeatable; replaces the defaults)
        #[arg(long, value_name = "NAME=V1,V2")]
        sweep: Vec<String>,
    },
    /// Monte-Carlo/tree agreement tests under both measures
    McCheck,
    /// Pathwise flow-inequality check for a coupled pair of starts
    FlowCheck {
        /// Lower starting point
        #[arg(long, default_value_t = 2.0)]
        x: f64,
        /// Upper starting point
        #[arg(long, default_value_t = 2.5)]
        y: f64,
    },
}

fn resolve(cli: &Cli) -> anyhow::Result<(RunConfig, bool, bool)> {
    let mut config = RunConfig::default();
    let mut paths_explicit = false;
    let mut spy_explicit = false;

    if let Some(path) = &cli.config {
        let loaded = config.load_file(path)?;
        paths_explicit |= loaded.n_paths;
        spy_explicit |= loaded.steps_per_year;
    }
    for entry in &cli.set {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--set expects key=value, got `{entry}`"))?;
        config.set(key.trim(), value.trim())?;
        paths_explicit |= key.trim() == "n_paths";
        spy_explicit |= key.trim() == "steps_per_year";
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(steps) = cli.steps {
        config.n_steps = steps;
    }
    if let Some(paths) = cli.paths {
        config.mc.n_paths = paths;
        paths_explicit = true;
    }
    if let Some(seed) = cli.seed {
        config.mc.seed = seed;
    }
    if let Some(fees) = &cli.fees {
        let (p, q) = fees
            .split_once(',')
            .ok_or_else(|| anyhow::anyhow!("--fees expects `p,q`, got `{fees}`"))?;
        config.params.fee_p = p
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("--fees: `{p}` is not a number"))?;
        config.params.fee_q = q
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("--fees: `{q}` is not a number"))?;
    }

    config.command = match &cli.command {
        Command::Price => "price",
        Command::Boundary => "boundary",
        Command::Table1 => "table1",
        Command::Sensitivity { sweep } => {
            if !sweep.is_empty() {
                let parsed = sweep
                    .iter()
                    .map(|s| parse_sweep_entry(s))
                    .collect::<anyhow::Result<Vec<_>>>()?;
                config.sweep = Some(parsed);
            }
            "sensitivity"
        }
        Command::McCheck => "mc-check",
        Command::FlowCheck { .. } => "flow-check",
    }
    .to_string();

    config.validate()?;
    Ok((config, paths_explicit, spy_explicit))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let (mut config, paths_explicit, spy_explicit) = match resolve(&cli) {
        Ok(resolved) => resolved,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    };

    let outcome = match &cli.command {
        Command::Price => commands::price(&config),
        Command::Boundary => commands::boundary(&config),
        Command::Table1 => commands::table1(&config),
        Command::Sensitivity { .. } => commands::sensitivity(&config),
        Command::McCheck => commands::mc_check(&config),
        Command::FlowCheck { x, y } => {
            config.mc = commands::flow_mc_defaults(&config.mc, paths_explicit, spy_explicit);
            commands::flow_check(&config, *x, *y)
        }
    };

    match outcome {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
