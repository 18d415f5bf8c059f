//! Command-line front end for SPSA-based configuration tuning.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 objective abort,
//! 3 I/O error. Log verbosity comes from the `SPSA_TUNE_LOG` environment
//! variable (error/warn/info/debug/trace). SIGINT requests a graceful
//! stop; the engine writes a final checkpoint before exiting.

mod commands;
mod config;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand};

use commands::Overrides;

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

#[cfg(unix)]
fn install_interrupt_handler() {
    extern "C" fn on_sigint(_: libc::c_int) {
        INTERRUPTED.store(true, Ordering::SeqCst);
    }
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as *const () as libc::sighandler_t);
    }
}

#[cfg(not(unix))]
fn install_interrupt_handler() {}

#[derive(Parser)]
#[command(name = "spsa-tune", version, about = "Derivative-free configuration tuning")]
struct Cli {
    /// Replace the config file's seed.
    #[arg(long, global = true, value_name = "SEED")]
    seed_override: Option<u64>,

    /// Replace the config file's iteration budget.
    #[arg(long, global = true, value_name = "N")]
    max_iterations_override: Option<u64>,

    /// Suppress progress output (results and errors still print).
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a tuning loop described by a config file.
    Tune { config: PathBuf },
    /// Continue a checkpointed run under a compatible config.
    Resume {
        checkpoint: PathBuf,
        config: PathBuf,
    },
    /// Summarize a trace file: initial/best objective and improvement.
    Report {
        trace: PathBuf,
        /// Also write "iteration value" pairs for external plotting.
        #[arg(long, value_name = "PATH")]
        data_out: Option<PathBuf>,
    },
    /// Evaluate the MapReduce cost model once and print the breakdown.
    Simulate { config: PathBuf },
}

fn main() {
    // Usage errors exit 1 (clap's default of 2 is reserved for objective
    // aborts); --help and --version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return;
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("SPSA_TUNE_LOG", if cli.quiet { "error" } else { "warn" }),
    )
    .init();
    install_interrupt_handler();

    let overrides = Overrides {
        seed: cli.seed_override,
        max_iterations: cli.max_iterations_override,
        quiet: cli.quiet,
    };
    let stop = Some(&INTERRUPTED);
    let result = match &cli.command {
        Command::Tune { config } => commands::cmd_tune(config, overrides, stop),
        Command::Resume { checkpoint, config } => {
            commands::cmd_resume(checkpoint, config, overrides, stop)
        }
        Command::Report { trace, data_out } => {
            commands::cmd_report(trace, data_out.as_deref(), overrides)
        }
        Command::Simulate { config } => commands::cmd_simulate(config, overrides),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
