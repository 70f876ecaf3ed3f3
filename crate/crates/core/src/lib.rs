//! Grid wildfire spread simulation with a benchmark-relative mitigation
//! environment, severity metrics, baseline policies and fireline search.

pub mod config;
pub mod env;
pub mod episode_log;
pub mod firespread;
pub mod grid;
pub mod gridfile;
pub mod reward;
pub mod seed;
pub mod service;
pub mod strategy;
pub mod terrain;
pub mod wind;

pub use config::{load_config, ConfigError, RunConfig};
pub use env::{
    run_benchmark, Action, ActionSpace, BenchmarkTrace, EnvError, EpisodeConfig, FireEnv, Interaction, Movement,
    Observation, Scenario,
};
pub use firespread::{
    rothermel_ros, CellStatus, DamageCounts, FireConfig, FireEngine, FireError, FireState, Ignition, Mitigation,
};
pub use grid::{Cell, Grid};
pub use reward::{DamageSnapshot, MetricSummary};
pub use strategy::{evaluate_policy, optimize_fireline, CemParams, EvalReport, FirelinePlan, Policy, PolicySpec};
pub use terrain::{Attribute, FuelCatalog, FuelModel, LayerStack};
pub use wind::{WindField, WindMode};
