use std::process::ExitCode;

use clap::Parser;
use spikerace_cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.resolve().and_then(|cfg| execute(cli.command, cfg)) {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
