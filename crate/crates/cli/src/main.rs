use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use process_rule::sampler::DEFAULT_SAMPLES;
use process_rule_cli::commands::{self, read_document};
use process_rule_cli::error::exit;
use process_rule_cli::{CliError, Output, Settings};

#[derive(Parser)]
#[command(name = "process-rule", version, about = "Process matrices and the trace rule for multi-region quantum scenarios")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of random trials (defaults depend on the command).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Numerical tolerance overriding the library defaults.
    #[arg(long, global = true, env = "PROCESS_RULE_TOL")]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    output: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Check every instrument and the process in a scenario.
    Validate { path: PathBuf },
    /// Joint outcome probabilities of the scenario's instruments.
    Prob { path: PathBuf },
    /// Condition the process on one outcome and print the updated scenario.
    Update {
        path: PathBuf,
        #[arg(long)]
        region: String,
        #[arg(long)]
        outcome: String,
        /// Instrument name, when several on the region share the outcome label.
        #[arg(long)]
        instrument: Option<String>,
    },
    /// Rebuild the process from its probabilities alone.
    Reconstruct {
        path: PathBuf,
        /// Estimate each probability from this many simulated shots.
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Check the Hilbert-Schmidt basis identities and the inner product formulas.
    Lemmas {
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Simulate the instrument chain and compare with the trace rule.
    Sample {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        n: u64,
    },
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    let s = Settings {
        seed: cli.seed,
        trials: cli.trials,
        tol: cli.tol,
    };
    if let Some(t) = s.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Usage(format!("tolerance must be positive, got {t}")));
        }
    }
    match &cli.command {
        Command::Validate { path } => commands::validate(&read_document(path)?, &s),
        Command::Prob { path } => commands::prob(&read_document(path)?, &s),
        Command::Update {
            path,
            region,
            outcome,
            instrument,
        } => commands::update(&read_document(path)?, &s, region, outcome, instrument.as_deref()),
        Command::Reconstruct { path, shots } => commands::reconstruct(&read_document(path)?, &s, *shots),
        Command::Lemmas { dim } => commands::lemmas(*dim, &s),
        Command::Sample { path, n } => commands::sample(&read_document(path)?, &s, *n),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            let text = match cli.output {
                Format::Human => out.human,
                Format::Machine => out.machine,
            };
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::from(out.status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
