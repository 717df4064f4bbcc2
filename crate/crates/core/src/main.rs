use std::process::ExitCode;

use clap::Parser;
use nwc::cli::{run, Cli, EXIT_CONFIG, EXIT_DATA};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_DATA };
            ExitCode::from(code as u8)
        }
    }
}
