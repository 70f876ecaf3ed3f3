pub mod args;
pub mod commands;
pub mod server;

use std::time::Duration;

use anyhow::Result;

use args::{Cli, Command, ServeArgs};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&commands::resolve_config(&a.common, Some(&a))?),
        Command::Benchmark(a) => commands::benchmark(&commands::resolve_config(&a.common, Some(&a))?),
        Command::Evaluate(a) => commands::evaluate(&commands::resolve_config(&a.common, Some(&a))?),
        Command::Optimize(a) => commands::optimize(&commands::resolve_config(&a.common, Some(&a))?),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => {
            println!("{}", commands::replay_log(&a.log)?);
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> Result<()> {
    // the base config may be partial; sessions fill in the rest
    let mut base = toml::Table::new();
    for p in &args.common.configs {
        emberline_core::config::deep_merge(&mut base, emberline_core::config::load_layer(p)?);
    }
    let mut base = serde_json::to_value(base)?;
    if let Some(seed) = args.common.seed {
        base["seed"] = seed.into();
    }
    let log_dir = args.common.out.as_ref().map(|d| d.join("sessions"));
    let state = server::AppState::new(base, log_dir, Duration::from_secs(args.idle_minutes * 60));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(state, &args.host, args.port))
}
