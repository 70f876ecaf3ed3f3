//! Episode environment: an agent moves over the grid placing mitigations
//! while the fire advances every `agent_speed` actions, scored against an
//! unmitigated benchmark run of the same ignition.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firespread::{CellStatus, DamageCounts, FireConfig, FireEngine, FireError, FireState, Ignition, Mitigation, AGENT_CODE};
use crate::grid::{Cell, Grid};
use crate::reward::{self, DamageSnapshot, MetricSummary, RewardError};
use crate::seed;
use crate::terrain::{layer_bounds, Attribute, LayerBounds, LayerStack};
use crate::wind::WindField;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Fire(#[from] FireError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("action index {index} out of range (action space has {size} actions)")]
    OutOfRange { index: usize, size: usize },
    #[error("benchmark did not quiesce within {0} steps")]
    StepCap(usize),
    #[error("episode is over; call reset")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Nothing,
    Up,
    Down,
    Left,
    Right,
}

impl Movement {
    pub fn name(self) -> &'static str {
        match self {
            Movement::Nothing => "nothing",
            Movement::Up => "up",
            Movement::Down => "down",
            Movement::Left => "left",
            Movement::Right => "right",
        }
    }

    /// Moves `cell` one step, staying put at the grid edge.
    pub fn apply(self, (r, c): Cell, (rows, cols): (usize, usize)) -> Cell {
        match self {
            Movement::Nothing => (r, c),
            Movement::Up => (r.saturating_sub(1), c),
            Movement::Down => ((r + 1).min(rows - 1), c),
            Movement::Left => (r, c.saturating_sub(1)),
            Movement::Right => (r, (c + 1).min(cols - 1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Nothing,
    Fireline,
    Wetline,
    Scratchline,
}

impl Interaction {
    pub fn name(self) -> &'static str {
        match self {
            Interaction::Nothing => "nothing",
            Interaction::Fireline => "fireline",
            Interaction::Wetline => "wetline",
            Interaction::Scratchline => "scratchline",
        }
    }

    pub fn mitigation(self) -> Option<Mitigation> {
        match self {
            Interaction::Nothing => None,
            Interaction::Fireline => Some(Mitigation::Fireline),
            Interaction::Wetline => Some(Mitigation::Wetline),
            Interaction::Scratchline => Some(Mitigation::Scratchline),
        }
    }
}

fn default_agent_speed() -> u32 {
    1
}

fn default_movements() -> Vec<Movement> {
    vec![Movement::Nothing, Movement::Up, Movement::Down, Movement::Left, Movement::Right]
}

fn default_interactions() -> Vec<Interaction> {
    vec![Interaction::Nothing, Interaction::Fireline, Interaction::Wetline, Interaction::Scratchline]
}

fn default_max_agent_steps() -> usize {
    10_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub agent_start: [usize; 2],
    /// Agent actions per fire step.
    #[serde(default = "default_agent_speed")]
    pub agent_speed: u32,
    #[serde(default = "default_movements")]
    pub movements: Vec<Movement>,
    #[serde(default = "default_interactions")]
    pub interactions: Vec<Interaction>,
    /// Extra observation channels after the three fire maps.
    #[serde(default)]
    pub attributes: Vec<Attribute>,
    #[serde(default = "default_max_agent_steps")]
    pub max_agent_steps: usize,
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Episode root seed. Filled from the run's seed, never read from a file.
    #[serde(skip)]
    pub seed: u64,
}

impl EpisodeConfig {
    pub fn new(agent_start: Cell) -> Self {
        Self {
            agent_start: [agent_start.0, agent_start.1],
            agent_speed: default_agent_speed(),
            movements: default_movements(),
            interactions: default_interactions(),
            attributes: Vec::new(),
            max_agent_steps: default_max_agent_steps(),
            normalize: true,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn agent_start(&self) -> Cell {
        (self.agent_start[0], self.agent_start[1])
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace {
            movements: self.movements.len(),
            interactions: self.interactions.len(),
        }
    }

    pub fn validate(&self, dims: (usize, usize)) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if self.agent_speed < 1 {
            return bad("agent_speed must be >= 1".into());
        }
        if self.movements.is_empty() {
            return bad("movements must not be empty".into());
        }
        if self.interactions.is_empty() {
            return bad("interactions must not be empty".into());
        }
        if self.max_agent_steps < 1 {
            return bad("max_agent_steps must be >= 1".into());
        }
        let (r, c) = self.agent_start();
        if r >= dims.0 || c >= dims.1 {
            return bad(format!("agent_start {:?} outside the {}x{} grid", self.agent_start, dims.0, dims.1));
        }
        Ok(())
    }
}

/// Indices into the configured movement and interaction lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub movement: usize,
    pub interaction: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub movements: usize,
    pub interactions: usize,
}

impl ActionSpace {
    pub fn size(&self) -> usize {
        self.movements * self.interactions
    }

    /// Flat index -> action: interaction-major, movement-minor.
    pub fn decode(&self, index: usize) -> Result<Action, EnvError> {
        if index >= self.size() {
            return Err(EnvError::OutOfRange { index, size: self.size() });
        }
        Ok(Action {
            movement: index % self.movements,
            interaction: index / self.movements,
        })
    }

    pub fn encode(&self, action: Action) -> Result<usize, EnvError> {
        if action.movement >= self.movements || action.interaction >= self.interactions {
            return Err(EnvError::OutOfRange {
                index: action.interaction * self.movements + action.movement,
                size: self.size(),
            });
        }
        Ok(action.interaction * self.movements + action.movement)
    }
}

/// Everything fixed for the lifetime of an experiment: layers, wind, fire
/// rules and the normalization bounds derived from them.
#[derive(Debug, Clone)]
pub struct Scenario {
    engine: Arc<FireEngine>,
    bounds: LayerBounds,
}

impl Scenario {
    pub fn new(stack: Arc<LayerStack>, wind: WindField, fire: &FireConfig) -> Result<Self, FireError> {
        let bounds = layer_bounds(&stack, &wind);
        Ok(Self {
            engine: Arc::new(FireEngine::new(stack, wind, fire)?),
            bounds,
        })
    }

    pub fn engine(&self) -> &FireEngine {
        &self.engine
    }

    pub fn stack(&self) -> &LayerStack {
        self.engine.stack()
    }

    pub fn wind(&self) -> &WindField {
        self.engine.wind()
    }

    pub fn fire_config(&self) -> &FireConfig {
        self.engine.config()
    }

    pub fn bounds(&self) -> &LayerBounds {
        &self.bounds
    }

    pub fn dims(&self) -> (usize, usize) {
        self.stack().dims()
    }

    pub fn area(&self) -> usize {
        self.stack().area()
    }

    /// Ignition cell for an episode seeded with `episode_seed`. `None` when a
    /// random ignition is requested on a grid with no burnable cell.
    pub fn ignition_cell(&self, episode_seed: u64) -> Result<Option<Cell>, EnvError> {
        match self.fire_config().ignition {
            Ignition::Cell([r, c]) => {
                let (rows, cols) = self.dims();
                if r >= rows || c >= cols {
                    return Err(FireError::OutOfBounds { cell: (r, c), rows, cols }.into());
                }
                Ok(Some((r, c)))
            }
            Ignition::Named(_) => {
                let stack = self.stack();
                let candidates: Vec<Cell> = stack
                    .fuel_ids()
                    .indexed_iter()
                    .map(|(cell, _)| cell)
                    .filter(|&cell| stack.is_burnable(cell))
                    .collect();
                if candidates.is_empty() {
                    return Ok(None);
                }
                let mut rng = seed::rng(seed::derive(episode_seed, seed::IGNITION));
                Ok(Some(candidates[rng.random_range(0..candidates.len())]))
            }
        }
    }

    /// Upper bound on the steps any fire can stay active: every cell ignites
    /// at most once and burns for `max_fire_duration` steps.
    pub fn step_cap(&self) -> usize {
        self.area() * self.fire_config().max_fire_duration as usize + 1
    }
}

/// Result of the unmitigated counterfactual run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTrace {
    pub ignition: Option<Cell>,
    /// Burned + burning after `t` steps; index 0 is the ignited state.
    pub damaged_per_t: Vec<usize>,
    pub burned_per_t: Vec<usize>,
    /// Step at which each cell ignited (`u32::MAX` = never).
    pub ignite_time: Grid<u32>,
    /// Step at which each cell burned out (`u32::MAX` = never).
    pub burnout_time: Grid<u32>,
    pub final_map: Grid<CellStatus>,
    pub total_timesteps: usize,
    pub total_burned: usize,
}

pub const NEVER: u32 = u32::MAX;

impl BenchmarkTrace {
    fn clamp_t(&self, t: usize) -> usize {
        t.min(self.damaged_per_t.len() - 1)
    }

    /// Burned + burning at fire step `t`, clamped to the final value.
    pub fn damaged_at(&self, t: usize) -> usize {
        self.damaged_per_t[self.clamp_t(t)]
    }

    pub fn burned_at(&self, t: usize) -> usize {
        self.burned_per_t[self.clamp_t(t)]
    }

    pub fn burning_at(&self, t: usize) -> usize {
        self.damaged_at(t) - self.burned_at(t)
    }

    pub fn status_at(&self, t: usize, cell: Cell) -> CellStatus {
        let t = t.min(u32::MAX as usize - 1) as u32;
        if self.ignite_time[cell] > t {
            CellStatus::Unburned
        } else if self.burnout_time[cell] <= t {
            CellStatus::Burned
        } else {
            CellStatus::Burning
        }
    }

    /// Benchmark status grid after `t` steps.
    pub fn map_at(&self, t: usize) -> Grid<CellStatus> {
        let (rows, cols) = self.final_map.dims();
        Grid::from_fn(rows, cols, |r, c| self.status_at(t, (r, c)))
    }
}

/// Runs the scenario from `ignition` with no mitigations until no cell burns.
/// Always takes at least one step.
pub fn run_benchmark(scenario: &Scenario, ignition: Option<Cell>) -> Result<BenchmarkTrace, EnvError> {
    run_benchmark_capped(scenario, ignition, scenario.step_cap())
}

pub fn run_benchmark_capped(scenario: &Scenario, ignition: Option<Cell>, cap: usize) -> Result<BenchmarkTrace, EnvError> {
    let (rows, cols) = scenario.dims();
    let mut state = FireState::new(rows, cols);
    let mut ignite_time = Grid::filled(rows, cols, NEVER);
    let mut burnout_time = Grid::filled(rows, cols, NEVER);
    if let Some(cell) = ignition {
        if scenario.stack().is_burnable(cell) && state.ignite(cell)? {
            ignite_time[cell] = 0;
        }
    }
    let counts = state.damage_counts();
    let mut damaged_per_t = vec![counts.burned + counts.burning];
    let mut burned_per_t = vec![counts.burned];

    loop {
        if damaged_per_t.len() > cap {
            return Err(EnvError::StepCap(cap));
        }
        let before = state.status().clone();
        scenario.engine().step(&mut state)?;
        let t = state.t() as u32;
        for (i, (&old, &new)) in before.as_slice().iter().zip(state.status().as_slice()).enumerate() {
            if old == new {
                continue;
            }
            let cell = state.status().cell_of(i);
            if new == CellStatus::Burning {
                ignite_time[cell] = t;
            }
            if new == CellStatus::Burned {
                burnout_time[cell] = t;
            }
        }
        let counts = state.damage_counts();
        damaged_per_t.push(counts.burned + counts.burning);
        burned_per_t.push(counts.burned);
        if !state.is_active() {
            break;
        }
    }

    Ok(BenchmarkTrace {
        ignition,
        total_timesteps: state.t(),
        total_burned: state.damage_counts().burned,
        damaged_per_t,
        burned_per_t,
        ignite_time,
        burnout_time,
        final_map: state.status().clone(),
    })
}

/// Stacked observation channels, each `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub names: Vec<String>,
    pub channels: Vec<Grid<f32>>,
}

/// Channel names in observation order.
pub fn channel_names(config: &EpisodeConfig) -> Vec<String> {
    let mut names = vec!["fire_map".to_string(), "benchmark_fire_map".into(), "final_benchmark_fire_map".into()];
    names.extend(config.attributes.iter().map(|a| a.name().to_string()));
    names
}

pub fn encode_observation(
    state: &FireState,
    trace: &BenchmarkTrace,
    scenario: &Scenario,
    agent: Cell,
    config: &EpisodeConfig,
) -> Observation {
    let (rows, cols) = scenario.dims();
    let t = state.t();
    let scale = if config.normalize { 1.0 / f32::from(AGENT_CODE) } else { 1.0 };
    let code = |s: CellStatus| f32::from(s.code()) * scale;

    let mut fire = Grid::from_fn(rows, cols, |r, c| code(state.status_at((r, c))));
    fire[agent] = f32::from(AGENT_CODE) * scale;
    let mut channels = vec![
        fire,
        Grid::from_fn(rows, cols, |r, c| code(trace.status_at(t, (r, c)))),
        trace.final_map.map(|&s| code(s)),
    ];
    let bounds = scenario.bounds();
    for &attr in &config.attributes {
        channels.push(Grid::from_fn(rows, cols, |r, c| {
            let v = attr.value(scenario.stack(), scenario.wind(), t, (r, c));
            if config.normalize {
                bounds.normalize(attr, v) as f32
            } else {
                v as f32
            }
        }));
    }
    Observation {
        names: channel_names(config),
        channels,
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepInfo {
    /// Fire steps taken so far.
    pub t: usize,
    pub agent: Cell,
    pub fire_advanced: bool,
    /// Mitigation bonus included in this step's reward.
    pub bonus: f64,
    pub damage: DamageSnapshot,
    /// The benchmark burned nothing, so rewards are pinned to 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// One episode. Construct with [`FireEnv::reset`].
#[derive(Debug, Clone)]
pub struct FireEnv {
    scenario: Scenario,
    config: EpisodeConfig,
    trace: Arc<BenchmarkTrace>,
    state: FireState,
    agent: Cell,
    n_actions: usize,
    /// damage at the last fire advance (or reset)
    last: DamageSnapshot,
    reward_sum: f64,
    bonus_sum: f64,
    bonus_count: usize,
    terminated: bool,
    truncated: bool,
}

impl FireEnv {
    /// Picks the ignition, runs the benchmark and returns the first observation.
    pub fn reset(scenario: &Scenario, config: &EpisodeConfig) -> Result<(Self, Observation), EnvError> {
        config.validate(scenario.dims())?;
        let ignition = scenario.ignition_cell(config.seed)?;
        let trace = Arc::new(run_benchmark(scenario, ignition)?);
        let env = Self::with_trace(scenario, config, trace)?;
        let obs = env.observe();
        Ok((env, obs))
    }

    /// Starts an episode against a precomputed benchmark (its ignition is reused).
    pub fn with_trace(scenario: &Scenario, config: &EpisodeConfig, trace: Arc<BenchmarkTrace>) -> Result<Self, EnvError> {
        config.validate(scenario.dims())?;
        if trace.final_map.dims() != scenario.dims() {
            return Err(EnvError::InvalidConfig("benchmark trace does not match the scenario grid".into()));
        }
        let mut state = FireState::for_stack(scenario.stack());
        if let Some(cell) = trace.ignition {
            if scenario.stack().is_burnable(cell) {
                state.ignite(cell)?;
            }
        }
        let last = snapshot(state.damage_counts(), &trace, 0);
        Ok(Self {
            scenario: scenario.clone(),
            config: config.clone(),
            agent: config.agent_start(),
            trace,
            state,
            n_actions: 0,
            last,
            reward_sum: 0.0,
            bonus_sum: 0.0,
            bonus_count: 0,
            terminated: false,
            truncated: false,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn trace(&self) -> &BenchmarkTrace {
        &self.trace
    }

    pub fn trace_arc(&self) -> Arc<BenchmarkTrace> {
        Arc::clone(&self.trace)
    }

    pub fn state(&self) -> &FireState {
        &self.state
    }

    pub fn agent(&self) -> Cell {
        self.agent
    }

    /// Actions taken so far.
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn fire_t(&self) -> usize {
        self.state.t()
    }

    pub fn action_space(&self) -> ActionSpace {
        self.config.action_space()
    }

    pub fn is_done(&self) -> bool {
        self.terminated || self.truncated
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward_sum
    }

    pub fn bonus_sum(&self) -> f64 {
        self.bonus_sum
    }

    pub fn bonus_count(&self) -> usize {
        self.bonus_count
    }

    /// Total endangered area: cells the benchmark burned.
    pub fn total_endangered(&self) -> usize {
        self.trace.total_burned
    }

    pub fn is_degenerate(&self) -> bool {
        self.total_endangered() == 0
    }

    pub fn last_snapshot(&self) -> DamageSnapshot {
        self.last
    }

    pub fn observe(&self) -> Observation {
        encode_observation(&self.state, &self.trace, &self.scenario, self.agent, &self.config)
    }

    pub fn decode_action(&self, index: usize) -> Result<Action, EnvError> {
        self.action_space().decode(index)
    }

    /// Applies one action and returns the next observation.
    pub fn step(&mut self, action: Action) -> Result<(Observation, Transition), EnvError> {
        let tr = self.step_raw(action)?;
        Ok((self.observe(), tr))
    }

    /// [`FireEnv::step`] without building the observation.
    pub fn step_raw(&mut self, action: Action) -> Result<Transition, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        self.action_space().encode(action)?;
        let dims = self.scenario.dims();
        self.agent = self.config.movements[action.movement].apply(self.agent, dims);

        let mut bonus = 0.0;
        if let Some(kind) = self.config.interactions[action.interaction].mitigation() {
            if self.state.apply_mitigation(self.agent, kind)? {
                bonus = reward::mitigation_bonus(self.scenario.area());
                self.bonus_count += 1;
            }
        }
        self.n_actions += 1;

        let mut reward = bonus;
        let mut fire_advanced = false;
        if self.n_actions.is_multiple_of(self.config.agent_speed as usize) {
            self.scenario.engine().step(&mut self.state)?;
            fire_advanced = true;
            self.terminated = !self.state.is_active();
            let counts = self.state.damage_counts();
            let now = if self.terminated {
                // fire is out: compare against where the benchmark ends up
                snapshot(counts, &self.trace, usize::MAX)
            } else {
                snapshot(counts, &self.trace, self.state.t())
            };
            reward += reward::step_reward(&self.last, &now, self.total_endangered());
            self.last = now;
        }
        if !self.terminated && self.n_actions >= self.config.max_agent_steps {
            self.truncated = true;
        }
        self.reward_sum += reward;
        self.bonus_sum += bonus;

        let counts = self.state.damage_counts();
        Ok(Transition {
            reward,
            terminated: self.terminated,
            truncated: self.truncated,
            info: StepInfo {
                t: self.state.t(),
                agent: self.agent,
                fire_advanced,
                bonus,
                damage: snapshot(counts, &self.trace, self.state.t()),
                degenerate: self.is_degenerate(),
            },
        })
    }

    /// Severity metrics for the episode so far.
    pub fn metrics(&self) -> MetricSummary {
        reward::summarize(
            self.state.damage_counts(),
            self.state.t(),
            &self.trace,
            self.reward_sum,
        )
    }
}

fn snapshot(sim: DamageCounts, trace: &BenchmarkTrace, t: usize) -> DamageSnapshot {
    DamageSnapshot {
        burned: sim.burned,
        burning: sim.burning,
        mitigated: sim.mitigated,
        bench_burned: trace.burned_at(t),
        bench_burning: trace.burning_at(t),
    }
}
