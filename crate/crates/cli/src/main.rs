use std::process::ExitCode;

use clap::Parser;
use emberline_cli::args::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EMBERLINE_LOG_LEVEL", "warn")).init();
    // usage errors exit with status 2 from here
    let cli = Cli::parse();
    match emberline_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
