use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rdro::cli::config::PRESET_THETA_GRID;
use rdro::cli::{cmd_solve, cmd_sweep, cmd_verify, Outcome, RunConfig};
use rdro::RdroError;

#[derive(Parser)]
#[command(name = "rdro", version, about = "Random distributionally robust optimization solver")]
struct Cli {
    /// Worker threads for sweeps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 50-atom CARA investment benchmark, θ = 1.
    Investment73,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at one θ (or at the θ matching an η target).
    Solve(RunArgs),
    /// Solve across a θ grid and write the duality table.
    Sweep(RunArgs),
    /// Run an oracle suite.
    Verify { suite: String },
}

fn load(args: &RunArgs, sweep: bool) -> Result<(RunConfig, PathBuf), RdroError> {
    let mut config = match (&args.config, args.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(Preset::Investment73)) => {
            let mut c = RunConfig::investment_preset();
            if sweep {
                c.theta = None;
                c.theta_grid = Some(PRESET_THETA_GRID.to_vec());
            }
            c
        }
        (None, None) => return Err(RdroError::Configuration("need --config or --preset".into())),
    };
    if let Ok(seed) = std::env::var("RDRO_SEED") {
        let seed = seed
            .trim()
            .parse()
            .map_err(|_| RdroError::Configuration(format!("RDRO_SEED must be an unsigned integer, got `{seed}`")))?;
        config.seed = Some(seed);
    }
    config.validate()?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("rdro-out"));
    Ok((config, out))
}

fn run(cli: Cli) -> Result<Outcome, RdroError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| RdroError::Configuration(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Solve(args) => {
            let (config, out) = load(&args, false)?;
            cmd_solve(&config, &out)
        }
        Command::Sweep(args) => {
            let (config, out) = load(&args, true)?;
            cmd_sweep(&config, &out)
        }
        Command::Verify { suite } => cmd_verify(&suite),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let outcome = run(Cli::parse()).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        Outcome::Failed
    });
    if outcome == Outcome::IterationCap {
        eprintln!("warning: outer iteration cap reached before convergence");
    }
    ExitCode::from(outcome.exit_code())
}
