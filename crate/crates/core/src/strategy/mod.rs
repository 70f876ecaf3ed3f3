//! Policies that drive the environment, seeded evaluation, and fireline
//! plan search.

mod cem;
mod plan;

pub use cem::{optimize_fireline, CemParams, IterationStats, OptimizeResult};
pub use plan::{FirelinePlan, PlanPolicy};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, BenchmarkTrace, EnvError, EpisodeConfig, FireEnv, Interaction, Movement, Scenario, Transition};
use crate::grid::Cell;
use crate::reward::MetricSummary;
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("policy cannot run in this action space: {0}")]
    Unsupported(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
}

/// Maps the current environment to the next action. Implementations see the
/// whole environment; call [`FireEnv::observe`] for the channel stack.
pub trait Policy: Send {
    fn act(&mut self, env: &FireEnv) -> Action;
}

fn movement_index(config: &EpisodeConfig, m: Movement) -> Option<usize> {
    config.movements.iter().position(|&x| x == m)
}

fn interaction_index(config: &EpisodeConfig, i: Interaction) -> Option<usize> {
    config.interactions.iter().position(|&x| x == i)
}

/// Fireline if offered, otherwise the first other mitigation.
fn placing_interaction(config: &EpisodeConfig) -> Result<usize, StrategyError> {
    interaction_index(config, Interaction::Fireline)
        .or_else(|| config.interactions.iter().position(|i| i.mitigation().is_some()))
        .ok_or_else(|| StrategyError::Unsupported("no mitigating interaction configured".into()))
}

/// "nothing" if offered, otherwise the placing interaction.
fn quiet_interaction(config: &EpisodeConfig) -> Result<usize, StrategyError> {
    match interaction_index(config, Interaction::Nothing) {
        Some(i) => Ok(i),
        None => placing_interaction(config),
    }
}

#[derive(Debug, Clone)]
pub struct NoopPolicy {
    action: Action,
}

impl NoopPolicy {
    pub fn new(config: &EpisodeConfig) -> Result<Self, StrategyError> {
        let movement = movement_index(config, Movement::Nothing)
            .ok_or_else(|| StrategyError::Unsupported("no-op needs the \"nothing\" movement".into()))?;
        let interaction = interaction_index(config, Interaction::Nothing)
            .ok_or_else(|| StrategyError::Unsupported("no-op needs the \"nothing\" interaction".into()))?;
        Ok(Self {
            action: Action { movement, interaction },
        })
    }
}

impl Policy for NoopPolicy {
    fn act(&mut self, _env: &FireEnv) -> Action {
        self.action
    }
}

/// Uniform over the flat action space; the draw is a pure function of
/// (seed, step index).
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    seed: u64,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn index(&self, step: usize, size: usize) -> usize {
        let h = seed::splitmix64(self.seed ^ seed::splitmix64(step as u64));
        ((u128::from(h) * size as u128) >> 64) as usize
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &FireEnv) -> Action {
        let space = env.action_space();
        space
            .decode(self.index(env.n_actions(), space.size()))
            .expect("index below size")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinePhase {
    Approach,
    Mark,
    Travel,
    Hold,
}

/// Walks to a row (horizontal travel) or column (vertical travel), then
/// lays a fireline in `direction` until the grid edge and holds there.
#[derive(Debug, Clone)]
pub struct LinePolicy {
    direction: Movement,
    target: Option<usize>,
    phase: LinePhase,
    travel: usize,
    place: usize,
    quiet: usize,
    stay: Option<usize>,
    toward: [Option<usize>; 2],
}

impl LinePolicy {
    /// `target` is the row for left/right travel or the column for up/down;
    /// `None` starts from wherever the agent is.
    pub fn new(config: &EpisodeConfig, direction: Movement, target: Option<usize>) -> Result<Self, StrategyError> {
        if direction == Movement::Nothing {
            return Err(StrategyError::Unsupported("line direction must be up, down, left or right".into()));
        }
        let travel = movement_index(config, direction)
            .ok_or_else(|| StrategyError::Unsupported(format!("movement \"{}\" not configured", direction.name())))?;
        let toward = match direction {
            Movement::Left | Movement::Right => [Movement::Up, Movement::Down],
            _ => [Movement::Left, Movement::Right],
        }
        .map(|m| movement_index(config, m));
        if target.is_some() && toward.iter().any(Option::is_none) {
            return Err(StrategyError::Unsupported("approaching a target line needs both perpendicular movements".into()));
        }
        Ok(Self {
            direction,
            target,
            phase: LinePhase::Approach,
            travel,
            place: placing_interaction(config)?,
            quiet: quiet_interaction(config)?,
            stay: movement_index(config, Movement::Nothing),
            toward,
        })
    }

    fn at_edge(&self, (r, c): Cell, (rows, cols): (usize, usize)) -> bool {
        match self.direction {
            Movement::Up => r == 0,
            Movement::Down => r + 1 == rows,
            Movement::Left => c == 0,
            Movement::Right => c + 1 == cols,
            Movement::Nothing => true,
        }
    }
}

impl Policy for LinePolicy {
    fn act(&mut self, env: &FireEnv) -> Action {
        let agent = env.agent();
        let dims = env.scenario().dims();
        if self.phase == LinePhase::Approach {
            let horizontal = matches!(self.direction, Movement::Left | Movement::Right);
            let (pos, limit) = if horizontal { (agent.0, dims.0) } else { (agent.1, dims.1) };
            let goal = self.target.unwrap_or(pos).min(limit - 1);
            if goal == pos {
                self.phase = LinePhase::Mark;
            } else {
                let m = if goal < pos { self.toward[0] } else { self.toward[1] };
                return Action {
                    movement: m.expect("checked in new"),
                    interaction: self.quiet,
                };
            }
        }
        if self.phase == LinePhase::Mark {
            self.phase = LinePhase::Travel;
            if let Some(stay) = self.stay {
                return Action {
                    movement: stay,
                    interaction: self.place,
                };
            }
        }
        if self.phase == LinePhase::Travel {
            let placed = env.state().status_at(agent).is_mitigated();
            if self.at_edge(agent, dims) && placed {
                self.phase = LinePhase::Hold;
            } else {
                return Action {
                    movement: self.travel,
                    interaction: self.place,
                };
            }
        }
        Action {
            movement: self.stay.unwrap_or(self.travel),
            interaction: self.quiet,
        }
    }
}

/// Serializable policy choice; builds a fresh policy per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Noop,
    Random,
    Line {
        direction: Movement,
        #[serde(default)]
        target: Option<usize>,
    },
    Plan {
        plan: FirelinePlan,
    },
}

impl PolicySpec {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySpec::Noop => "noop",
            PolicySpec::Random => "random",
            PolicySpec::Line { .. } => "line",
            PolicySpec::Plan { .. } => "plan",
        }
    }

    /// Policy for the episode seeded with `config.seed`.
    pub fn build(&self, config: &EpisodeConfig, dims: (usize, usize)) -> Result<Box<dyn Policy>, StrategyError> {
        Ok(match self {
            PolicySpec::Noop => Box::new(NoopPolicy::new(config)?),
            PolicySpec::Random => Box::new(RandomPolicy::new(seed::derive(config.seed, seed::POLICY))),
            PolicySpec::Line { direction, target } => Box::new(LinePolicy::new(config, *direction, *target)?),
            PolicySpec::Plan { plan } => Box::new(PlanPolicy::new(config, plan, dims)?),
        })
    }
}

/// Drives `env` with `policy` until the episode ends, calling `on_step`
/// after every action.
pub fn run_episode(
    env: &mut FireEnv,
    policy: &mut dyn Policy,
    mut on_step: impl FnMut(&FireEnv, Action, &Transition),
) -> Result<MetricSummary, StrategyError> {
    while !env.is_done() {
        let action = policy.act(env);
        let tr = env.step_raw(action)?;
        on_step(env, action, &tr);
    }
    Ok(env.metrics())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub episode_reward_sum: f64,
    pub area_saved: f64,
    pub timesteps_saved: f64,
    pub burn_rate_reduction: f64,
}

impl Aggregate {
    fn of(m: &MetricSummary) -> Self {
        Self {
            episode_reward_sum: m.episode_reward_sum,
            area_saved: m.area_saved as f64,
            timesteps_saved: m.timesteps_saved as f64,
            burn_rate_reduction: m.burn_rate_reduction,
        }
    }

    fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            episode_reward_sum: f(self.episode_reward_sum, o.episode_reward_sum),
            area_saved: f(self.area_saved, o.area_saved),
            timesteps_saved: f(self.timesteps_saved, o.timesteps_saved),
            burn_rate_reduction: f(self.burn_rate_reduction, o.burn_rate_reduction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    /// Episode seeds, one per entry of `episodes`.
    pub seeds: Vec<u64>,
    pub episodes: Vec<MetricSummary>,
    pub mean: Aggregate,
    /// Population standard deviation.
    pub std: Aggregate,
}

impl EvalReport {
    pub fn new(policy: &str, seeds: Vec<u64>, episodes: Vec<MetricSummary>) -> Self {
        let n = episodes.len().max(1) as f64;
        let sum = episodes
            .iter()
            .map(Aggregate::of)
            .fold(Aggregate::default(), |a, b| a.zip(b, |x, y| x + y));
        let mean = sum.zip(sum, |x, _| x / n);
        let var = episodes
            .iter()
            .map(Aggregate::of)
            .map(|a| a.zip(mean, |x, m| (x - m) * (x - m)))
            .fold(Aggregate::default(), |a, b| a.zip(b, |x, y| x + y));
        Self {
            policy: policy.to_string(),
            seeds,
            episodes,
            mean,
            std: var.zip(var, |v, _| (v / n).sqrt()),
        }
    }
}

/// Episode seeds `0..n` derived from a root seed.
pub fn episode_seeds(root: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seed::derive_indexed(root, "episode", i)).collect()
}

/// Runs one episode per seed in parallel. Reports are ordered by seed index.
pub fn evaluate_on_seeds(
    spec: &PolicySpec,
    scenario: &Scenario,
    config: &EpisodeConfig,
    seeds: &[u64],
) -> Result<EvalReport, StrategyError> {
    let traces = seeds
        .par_iter()
        .map(|&s| {
            let ignition = scenario.ignition_cell(s)?;
            Ok(Arc::new(crate::env::run_benchmark(scenario, ignition)?))
        })
        .collect::<Result<Vec<_>, EnvError>>()?;
    evaluate_with_traces(spec, scenario, config, seeds, &traces)
}

/// As [`evaluate_on_seeds`] with benchmarks already computed per seed.
pub fn evaluate_with_traces(
    spec: &PolicySpec,
    scenario: &Scenario,
    config: &EpisodeConfig,
    seeds: &[u64],
    traces: &[Arc<BenchmarkTrace>],
) -> Result<EvalReport, StrategyError> {
    let episodes = seeds
        .par_iter()
        .zip(traces.par_iter())
        .map(|(&s, trace)| run_seeded(spec, scenario, config, s, Arc::clone(trace)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::new(spec.name(), seeds.to_vec(), episodes))
}

fn run_seeded(
    spec: &PolicySpec,
    scenario: &Scenario,
    config: &EpisodeConfig,
    episode_seed: u64,
    trace: Arc<BenchmarkTrace>,
) -> Result<MetricSummary, StrategyError> {
    let config = config.clone().with_seed(episode_seed);
    let mut env = FireEnv::with_trace(scenario, &config, trace)?;
    let mut policy = spec.build(&config, scenario.dims())?;
    run_episode(&mut env, policy.as_mut(), |_, _, _| {})
}

/// Evaluates `spec` over `n_episodes` seeds derived from `config.seed`.
pub fn evaluate_policy(
    spec: &PolicySpec,
    scenario: &Scenario,
    config: &EpisodeConfig,
    n_episodes: usize,
) -> Result<EvalReport, StrategyError> {
    if n_episodes == 0 {
        return Err(StrategyError::InvalidParams("n_episodes must be >= 1".into()));
    }
    evaluate_on_seeds(spec, scenario, config, &episode_seeds(config.seed, n_episodes))
}
