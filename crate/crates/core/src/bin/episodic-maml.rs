use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use episodic_maml::cli::{self, RunConfig};

/// Few-shot meta-learning for refactoring classification.
#[derive(Parser)]
#[command(version, after_help = cli::USAGE)]
struct Args {
    /// One of: split, meta-train, meta-test, baseline, synth-bench, gradcheck.
    command: String,

    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one field, e.g. `--set maml.alpha=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(err) if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(cli::EXIT_USAGE as u8);
        }
    };
    let code = match RunConfig::load(args.config.as_deref(), &args.overrides) {
        Ok(cfg) => cli::execute_named(&args.command, &cfg),
        Err(err) => {
            eprintln!("error: {err}");
            cli::exit_code(&err)
        }
    };
    ExitCode::from(code as u8)
}
