use std::path::PathBuf;
use std::process::ExitCode;

use chronograph_cli::commands::{self, CompareFlags, Exit};
use clap::{error::ErrorKind, Parser, Subcommand};

/// Linear evolution equations on time graphs.
#[derive(Debug, Parser)]
#[command(name = "chronograph", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a problem file; writes solution.csv and report.json.
    Solve {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a built-in preset as problem.json and solve it.
    Scenario {
        id: String,
        /// Parameter override, e.g. `alpha=3`; may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the solver against Crank–Nicolson and Picard iteration.
    Compare {
        file: PathBuf,
        #[arg(long)]
        cn_steps: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the solvability class of the transmission pattern.
    Classify { file: PathBuf },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("CHRONOGRAPH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("CHRONOGRAPH_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Exit {
    match cli.command {
        Command::Solve { file, out } => commands::run_solve(&file, &commands::out_dir(out)),
        Command::Scenario { id, set, out } => commands::run_scenario(&id, &set, &commands::out_dir(out)),
        Command::Compare { file, cn_steps, tol, out } => {
            commands::run_compare(&file, &CompareFlags { cn_steps, tol }, &commands::out_dir(out))
        }
        Command::Classify { file } => commands::run_classify(&file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Exit::Ok,
                _ => Exit::Invalid,
            };
            return ExitCode::from(code.code() as u8);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(Exit::Invalid.code() as u8);
    }
    ExitCode::from(run(cli).code() as u8)
}
