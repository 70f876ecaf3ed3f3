use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "emberline", version, about = "Wildfire spread simulation and mitigation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode with a policy and write its log and frames.
    Simulate(RunArgs),
    /// Run the unmitigated fire and write its trace.
    Benchmark(RunArgs),
    /// Evaluate a policy over several episode seeds.
    Evaluate(RunArgs),
    /// Search for a fireline plan within the configured budget.
    Optimize(RunArgs),
    /// Serve interactive sessions over HTTP.
    Serve(ServeArgs),
    /// Rebuild a served session from its command log and print its state.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Config file; repeat to layer overrides, later files win.
    #[arg(long = "config", value_name = "PATH")]
    pub configs: Vec<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write a status grid every N fire steps (0 disables).
    #[arg(long, value_name = "N")]
    pub frames_every: Option<usize>,
    /// Policy: noop, random, line[:DIR[:ROW]] or plan:FILE.
    #[arg(long)]
    pub policy: Option<String>,
    /// Episodes for evaluate.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Idle minutes before a session is dropped.
    #[arg(long, default_value_t = 30)]
    pub idle_minutes: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Session command log written by `serve`.
    #[arg(long)]
    pub log: PathBuf,
}
