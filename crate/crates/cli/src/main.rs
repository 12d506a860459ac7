use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpmarkov_cli::config::{load_config, ExperimentKind};
use cpmarkov_cli::run::{run_experiment, Options, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "cpmarkov", version, about = "Weak-coupling generator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Projection, generator and semigroup audits.
    Audit(Common),
    /// Dump L_T and H2_T.
    Generator(Common),
    /// Markov approximation residual against the memory equation.
    NzResidual(Common),
    /// Convergence of the smoothed dynamics as lambda shrinks.
    Sweep(Common),
    /// Quantum population dynamics.
    Qfgr(Common),
    /// Steady states over a grid of collision times.
    SteadyScan(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplies every tolerance.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Audit(a) => (ExperimentKind::Audit, a),
        Command::Generator(a) => (ExperimentKind::Generator, a),
        Command::NzResidual(a) => (ExperimentKind::NzResidual, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Qfgr(a) => (ExperimentKind::Qfgr, a),
        Command::SteadyScan(a) => (ExperimentKind::SteadyScan, a),
    };
    let code = match execute(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}

fn execute(kind: ExperimentKind, args: Common) -> anyhow::Result<i32> {
    if !(args.tol_scale.is_finite() && args.tol_scale > 0.0) {
        anyhow::bail!("--tol-scale must be positive");
    }
    let cfg = load_config(&args.config)?;
    if let Some(k) = cfg.experiment.kind {
        if k != kind {
            anyhow::bail!("config is for '{}', not '{}'", k.name(), kind.name());
        }
    }
    let opts = Options {
        out: args.out,
        seed: args.seed,
        tol_scale: args.tol_scale,
    };
    run_experiment(&cfg, kind, &opts)
}
