use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use majolyap_cli::error::{CliError, CliResult};
use majolyap_cli::oracle_check::{run_oracle_suite, OracleGrid, Tolerances};
use majolyap_cli::replay::{read_record, replay, ReplayRequest};
use majolyap_cli::sweep::{read_config, run_sweep};
use majolyap_cli::thread_count;
use majolyap_core::rng::TrajectorySeed;

#[derive(Parser)]
#[command(name = "majolyap", version, about = "Lyapunov spectra and topology of monitored Majorana circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter grid from a JSON config.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = "majolyap-out")]
        out: PathBuf,
    },
    /// Recompute diagnostics from an outcome record.
    Replay {
        #[arg(short, long)]
        record: PathBuf,
        #[arg(long = "J", default_value_t = 0.0)]
        j: f64,
        #[arg(long)]
        mu_o: f64,
        #[arg(long)]
        mu_e: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long, default_value_t = 0)]
        seed_index: u64,
        /// Also rebuild the twisted partner and report χ.
        #[arg(long)]
        chi: bool,
    },
    /// Compare the Gaussian engine against exact many-body evolution.
    OracleCheck {
        /// Optional oracle_check config; defaults to a small built-in grid.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
}

fn with_pool<T: Send>(f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build().map_err(|e| CliError::Input(e.to_string()))?.install(f)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sweep { config, out } => {
            let cfg = read_config(&config)?;
            let summary = run_sweep(&cfg, &out, thread_count())?;
            if let Some(report) = &summary.oracle {
                print!("{}", report.render());
            }
            eprintln!("{} tasks, {} unconverged, output in {}", summary.tasks, summary.unconverged, out.display());
            Ok(())
        }
        Command::Replay { record, j, mu_o, mu_e, seed_base, seed_index, chi } => {
            let rec = read_record(&record)?;
            let req = ReplayRequest { j, mu_o, mu_e, seed: TrajectorySeed::new(seed_base, seed_index), chi };
            let report = replay(&rec, &req)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(e.to_string()))?);
            Ok(())
        }
        Command::OracleCheck { config, tolerance_scale } => {
            let grid = match config {
                Some(path) => OracleGrid::from_config(&read_config(&path)?)?,
                None => OracleGrid::tiny(),
            };
            if tolerance_scale.is_nan() || tolerance_scale <= 0.0 {
                return Err(CliError::Input("--tolerance-scale must be positive".into()));
            }
            let report = with_pool(|| run_oracle_suite(&grid, Tolerances::default().scaled(tolerance_scale)))?;
            print!("{}", report.render());
            report.into_result().map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
