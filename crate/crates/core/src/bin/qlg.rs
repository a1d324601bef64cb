use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qlg_core::config::RunConfig;
use qlg_core::runner::{self, RunOptions};
use qlg_core::spectral::parse_windows;
use qlg_core::QlgError;

#[derive(Parser)]
#[command(name = "qlg", version, about = "Quantum lattice gas runs for the 3D Gross-Pitaevskii equation")]
struct Cli {
    /// Number of worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured initial state and report its energy ratios.
    Init {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Snapshot to write (default: <output_dir>/init.qlg).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve with energy/fidelity trace, snapshots and checkpoints.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        /// Start from this snapshot instead of the configured layout.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Shell spectra and exponent fits of one or more snapshots.
    Spectra {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "4:12,14:24")]
        windows: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Recurrence time on several grids against T ~ L^2.
    Recurrence {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated grid extents, increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        /// Step budget for the largest grid.
        #[arg(long, default_value_t = 20000)]
        budget_steps: u64,
        /// Grid on which the configured a and phase_scale hold (default: the first).
        #[arg(long)]
        reference: Option<usize>,
    },
    /// Arnold cat map period and point-inversion test.
    Catmap {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        steps: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &QlgError) -> u8 {
    match err {
        QlgError::Config { .. } | QlgError::InvalidInput(_) | QlgError::Window { .. } => 2,
        QlgError::Io { .. } | QlgError::Format(_) | QlgError::Truncated { .. } => 3,
        QlgError::NumericInvariant(_)
        | QlgError::ZeroNorm
        | QlgError::ZeroKineticEnergy
        | QlgError::IndeterminateWinding { .. } => 4,
    }
}

fn load_config(path: Option<&PathBuf>) -> qlg_core::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            QlgError::Config { line, message } => QlgError::Config { line, message: format!("{}: {message}", p.display()) },
            other => other,
        }),
        None => Ok(RunConfig::default()),
    }
}

fn execute(command: Command) -> qlg_core::Result<()> {
    match command {
        Command::Init { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join("init.qlg"));
            let class = runner::init(&cfg, &out)?;
            println!("wrote {}", out.display());
            println!("{class}");
        }
        Command::Run { config, steps, input, resume } => {
            let cfg = load_config(config.as_ref())?;
            let summary = runner::run(&cfg, &RunOptions { steps, input, resume })?;
            println!(
                "steps {}..{}: final snapshot {}, trace {}",
                summary.start_step,
                summary.end_step,
                summary.final_snapshot.display(),
                summary.trace_csv.display()
            );
            for (t, f) in &summary.peaks {
                println!("recurrence peak at t={t}: fidelity {f:.6}");
            }
        }
        Command::Spectra { inputs, windows, out } => {
            let windows = parse_windows(&windows)?;
            let rows = runner::spectra(&inputs, &windows, &out)?;
            println!("wrote {} fit rows to {}", rows.len(), out.join("fit_table.csv").display());
        }
        Command::Recurrence { config, grids, budget_steps, reference } => {
            let cfg = load_config(config.as_ref())?;
            let reference = reference.or(grids.first().copied()).unwrap_or(cfg.grid.extent(qlg_core::Axis::X));
            let report = runner::recurrence(&cfg, &grids, reference, budget_steps)?;
            print!("{report}");
        }
        Command::Catmap { n, image, steps, out } => {
            let report = runner::catmap(n, image.as_deref(), steps, out.as_deref())?;
            println!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("qlg: {e}");
            return ExitCode::from(1);
        }
    }
    let name = match &cli.command {
        Command::Init { .. } => "init",
        Command::Run { .. } => "run",
        Command::Spectra { .. } => "spectra",
        Command::Recurrence { .. } => "recurrence",
        Command::Catmap { .. } => "catmap",
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qlg {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
