use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use itm_core::harness::{load_config, run_experiment, ExperimentKind, RunContext};

#[derive(Parser)]
#[command(name = "itm", version, about = "Instantaneous time mirror experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "itm-out")]
    out: PathBuf,
    /// Seed for random initial data; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ConfigArg {
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Single run with snapshots and energy table.
    Run(ConfigArg),
    /// Remainder norms over a sweep of window widths.
    Sweep {
        config: PathBuf,
        /// Comma-separated window widths.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Time-domain solver against the exact spectral solution.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Refocused field against the predicted image.
    Refocus(ConfigArg),
    /// Convergence of finite windows to the jump condition.
    JumpLimit {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Boundedness of high norms across window widths.
    Uniformity {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> itm_core::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| itm_core::Error::InvalidArgument(e.to_string()))?;
    }
    let (kind, path, eps, levels) = match cli.command {
        Command::Run(c) => (ExperimentKind::Run, c.config, None, None),
        Command::Sweep { config, eps } => (ExperimentKind::Sweep, config, eps, None),
        Command::Oracle { config, levels } => (ExperimentKind::Oracle, config, None, levels),
        Command::Refocus(c) => (ExperimentKind::Refocus, c.config, None, None),
        Command::JumpLimit { config, eps } => (ExperimentKind::JumpLimit, config, eps, None),
        Command::Uniformity { config, eps } => (ExperimentKind::Uniformity, config, eps, None),
    };
    let mut config = load_config(&path).map_err(|e| match e {
        itm_core::Error::Io(io) => itm_core::Error::InvalidArgument(format!("{}: {io}", path.display())),
        e => e,
    })?;
    config.kind = kind;
    if let Some(eps) = eps {
        config.sweep.eps = eps;
    }
    if let Some(levels) = levels {
        config.oracle.levels = levels;
    }
    let mut ctx = RunContext::new(&cli.out);
    ctx.seed = cli.seed;
    ctx.threads = rayon::current_num_threads();
    let outcome = run_experiment(&config, &ctx)?;
    println!("{}", outcome.manifest_path.display());
    println!("{}", serde_json::to_string_pretty(&outcome.manifest.summary)?);
    Ok(())
}
