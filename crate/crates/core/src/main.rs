use std::process::ExitCode;

use clap::Parser;
use dynconn::cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    let cli = Cli::parse();
    match run(cli, &command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
