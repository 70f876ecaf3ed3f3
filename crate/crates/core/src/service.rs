//! Interactive what-if sessions: a person places mitigations directly and
//! advances fire time on demand, with the benchmark run kept alongside.
//!
//! Every command bumps the session revision. Each cell remembers the
//! revision that last changed it, so a delta since any earlier revision is
//! just the cells stamped after it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::env::{run_benchmark, BenchmarkTrace, EnvError, Scenario};
use crate::firespread::{CellStatus, DamageCounts, FireError, FireState, Mitigation, AGENT_CODE};
use crate::grid::{Cell, Grid};
use crate::reward::DamageSnapshot;

/// Largest `steps` a single advance command accepts.
pub const MAX_ADVANCE: usize = 100_000;
pub const DEFAULT_IDLE_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("cell [{r}, {c}] is outside the {rows}x{cols} grid", r = .cell.0, c = .cell.1)]
    OutOfBounds { cell: Cell, rows: usize, cols: usize },
    #[error("revision {requested} is ahead of the current revision {current}")]
    FutureRevision { requested: u64, current: u64 },
    #[error("steps must lie in [1, {MAX_ADVANCE}], got {0}")]
    InvalidSteps(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl From<FireError> for ServiceError {
    fn from(e: FireError) -> Self {
        match e {
            FireError::OutOfBounds { cell, rows, cols } => ServiceError::OutOfBounds { cell, rows, cols },
            other => ServiceError::Env(other.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Mitigate { cell: [usize; 2], kind: Mitigation },
    Advance { steps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LegendEntry {
    pub code: u8,
    pub name: &'static str,
}

/// Status-code table shared with clients.
pub fn legend() -> Vec<LegendEntry> {
    let mut v: Vec<LegendEntry> = (0..AGENT_CODE)
        .map(|code| LegendEntry {
            code,
            name: CellStatus::from_code(code).expect("codes below the agent code are statuses").name(),
        })
        .collect();
    v.push(LegendEntry {
        code: AGENT_CODE,
        name: "agent",
    });
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullState {
    pub revision: u64,
    pub t: usize,
    pub rows: usize,
    pub cols: usize,
    /// Status codes, row-major rows.
    pub grid: Vec<Vec<u8>>,
    pub counts: DamageCounts,
}

/// Cells changed after some revision, as `[row, col, code]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub revision: u64,
    pub t: usize,
    pub changed: Vec<[usize; 3]>,
    pub counts: DamageCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum StateView {
    Full(FullState),
    Delta(Delta),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Descriptor {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub ignition: Option<Cell>,
    pub legend: Vec<LegendEntry>,
    pub benchmark_total_burned: usize,
    pub benchmark_timesteps: usize,
    pub state: FullState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvanceReport {
    #[serde(flatten)]
    pub delta: Delta,
    /// Live and benchmark damage after each step taken.
    pub steps: Vec<DamageSnapshot>,
    /// (benchmark damage - live damage) / benchmark final burned; the live
    /// fire compares against the benchmark's end state once it is out.
    pub saved_proportion: f64,
    pub active: bool,
}

pub struct Session {
    config: RunConfig,
    scenario: Scenario,
    trace: Arc<BenchmarkTrace>,
    state: FireState,
    revision: u64,
    stamped: Grid<u64>,
    log: Vec<Command>,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self, ServiceError> {
        let scenario = config.build_scenario().map_err(|e| ServiceError::Config(e.to_string()))?;
        let ignition = scenario.ignition_cell(config.seed)?;
        let trace = Arc::new(run_benchmark(&scenario, ignition)?);
        let mut state = FireState::for_stack(scenario.stack());
        if let Some(cell) = ignition {
            if scenario.stack().is_burnable(cell) {
                state.ignite(cell)?;
            }
        }
        let (rows, cols) = scenario.dims();
        Ok(Self {
            config,
            scenario,
            trace,
            state,
            revision: 0,
            stamped: Grid::filled(rows, cols, 0),
            log: Vec::new(),
        })
    }

    /// Rebuilds a session by re-running `log` from creation.
    pub fn replay(config: RunConfig, log: &[Command]) -> Result<Self, ServiceError> {
        let mut s = Self::new(config)?;
        for &cmd in log {
            s.apply(cmd)?;
        }
        Ok(s)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn log(&self) -> &[Command] {
        &self.log
    }

    pub fn trace(&self) -> &BenchmarkTrace {
        &self.trace
    }

    pub fn fire_state(&self) -> &FireState {
        &self.state
    }

    pub fn descriptor(&self, id: &str) -> Descriptor {
        let (rows, cols) = self.scenario.dims();
        Descriptor {
            id: id.to_string(),
            rows,
            cols,
            ignition: self.trace.ignition,
            legend: legend(),
            benchmark_total_burned: self.trace.total_burned,
            benchmark_timesteps: self.trace.total_timesteps,
            state: self.full_state(),
        }
    }

    pub fn full_state(&self) -> FullState {
        let (rows, cols) = self.scenario.dims();
        FullState {
            revision: self.revision,
            t: self.state.t(),
            rows,
            cols,
            grid: (0..rows)
                .map(|r| self.state.status().row(r).iter().map(|s| s.code()).collect())
                .collect(),
            counts: self.state.damage_counts(),
        }
    }

    /// Cells changed after revision `since`.
    pub fn delta_since(&self, since: u64) -> Result<Delta, ServiceError> {
        if since > self.revision {
            return Err(ServiceError::FutureRevision {
                requested: since,
                current: self.revision,
            });
        }
        let changed = self
            .stamped
            .indexed_iter()
            .filter(|(_, &rev)| rev > since)
            .map(|((r, c), _)| [r, c, usize::from(self.state.status_at((r, c)).code())])
            .collect();
        Ok(Delta {
            revision: self.revision,
            t: self.state.t(),
            changed,
            counts: self.state.damage_counts(),
        })
    }

    pub fn get_state(&self, since: Option<u64>) -> Result<StateView, ServiceError> {
        match since {
            None => Ok(StateView::Full(self.full_state())),
            Some(r) => Ok(StateView::Delta(self.delta_since(r)?)),
        }
    }

    pub fn mitigate(&mut self, cell: Cell, kind: Mitigation) -> Result<Delta, ServiceError> {
        let (rows, cols) = self.scenario.dims();
        if cell.0 >= rows || cell.1 >= cols {
            return Err(ServiceError::OutOfBounds { cell, rows, cols });
        }
        let before = self.revision;
        self.revision += 1;
        self.log.push(Command::Mitigate {
            cell: [cell.0, cell.1],
            kind,
        });
        if self.state.apply_mitigation(cell, kind)? {
            self.stamped[cell] = self.revision;
        }
        self.delta_since(before)
    }

    pub fn advance(&mut self, steps: usize) -> Result<AdvanceReport, ServiceError> {
        if steps == 0 || steps > MAX_ADVANCE {
            return Err(ServiceError::InvalidSteps(steps));
        }
        let before = self.revision;
        self.revision += 1;
        self.log.push(Command::Advance { steps });
        let mut snapshots = Vec::new();
        for _ in 0..steps {
            // quiescence stops the fire clock
            if !self.state.is_active() {
                break;
            }
            let prev = self.state.status().clone();
            self.scenario.engine().step(&mut self.state)?;
            for (i, (a, b)) in prev.as_slice().iter().zip(self.state.status().as_slice()).enumerate() {
                if a != b {
                    self.stamped.as_mut_slice()[i] = self.revision;
                }
            }
            snapshots.push(self.snapshot());
        }
        let saved_proportion = self.saved_proportion();
        Ok(AdvanceReport {
            delta: self.delta_since(before)?,
            steps: snapshots,
            saved_proportion,
            active: self.state.is_active(),
        })
    }

    pub fn apply(&mut self, cmd: Command) -> Result<(), ServiceError> {
        match cmd {
            Command::Mitigate { cell, kind } => self.mitigate((cell[0], cell[1]), kind).map(drop),
            Command::Advance { steps } => self.advance(steps).map(drop),
        }
    }

    fn bench_t(&self) -> usize {
        if self.state.is_active() {
            self.state.t()
        } else {
            usize::MAX
        }
    }

    pub fn snapshot(&self) -> DamageSnapshot {
        let c = self.state.damage_counts();
        let t = self.bench_t();
        DamageSnapshot {
            burned: c.burned,
            burning: c.burning,
            mitigated: c.mitigated,
            bench_burned: self.trace.burned_at(t),
            bench_burning: self.trace.burning_at(t),
        }
    }

    pub fn saved_proportion(&self) -> f64 {
        let te = self.trace.total_burned;
        if te == 0 {
            return 0.0;
        }
        let s = self.snapshot();
        (crate::reward::damaged_bench_snapshot(&s) as f64 - crate::reward::damaged_sim(&s) as f64) / te as f64
    }
}

struct Entry {
    session: Arc<Mutex<Session>>,
    last_used: Mutex<Instant>,
}

/// Concurrent session registry with idle expiry. Commands to one session
/// serialize on its mutex; different sessions proceed independently.
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Entry>>,
    ttl: Duration,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(DEFAULT_IDLE_TTL)
    }
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            ttl,
        }
    }

    pub fn insert(&self, id: String, session: Session) -> Arc<Mutex<Session>> {
        let session = Arc::new(Mutex::new(session));
        self.sessions.write().expect("store lock").insert(
            id,
            Entry {
                session: Arc::clone(&session),
                last_used: Mutex::new(Instant::now()),
            },
        );
        session
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let map = self.sessions.read().expect("store lock");
        let entry = map.get(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))?;
        *entry.last_used.lock().expect("clock lock") = Instant::now();
        Ok(Arc::clone(&entry.session))
    }

    pub fn remove(&self, id: &str) -> Result<(), ServiceError> {
        self.sessions
            .write()
            .expect("store lock")
            .remove(id)
            .map(drop)
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the TTL at `now`; returns their ids.
    pub fn purge_idle(&self, now: Instant) -> Vec<String> {
        let mut map = self.sessions.write().expect("store lock");
        let expired: Vec<String> = map
            .iter()
            .filter(|(_, e)| now.saturating_duration_since(*e.last_used.lock().expect("clock lock")) > self.ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            map.remove(id);
        }
        expired
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seed: u64) -> RunConfig {
        RunConfig::from_toml_str(&format!(
            r#"
seed = {seed}
[scenario.terrain]
source = "procedural"
rows = 24
cols = 24
params.fuel_mix = [{{ fuel = 1, weight = 1.0 }}]
[scenario.fire]
ignition = [12, 12]
max_fire_duration = 40
[environment]
agent_start = [0, 0]
"#
        ))
        .unwrap()
    }

    #[test]
    fn mitigation_deltas() {
        let mut s = Session::new(config(1)).unwrap();
        let d = s.mitigate((2, 3), Mitigation::Fireline).unwrap();
        assert_eq!((d.revision, d.changed.clone()), (1, vec![[2, 3, 3]]));
        let d = s.mitigate((12, 12), Mitigation::Wetline).unwrap();
        assert_eq!(d.revision, 2);
        assert!(d.changed.is_empty());
        assert!(matches!(s.mitigate((24, 0), Mitigation::Fireline), Err(ServiceError::OutOfBounds { .. })));
        assert!(s.delta_since(s.revision()).unwrap().changed.is_empty());
        assert!(matches!(s.delta_since(9), Err(ServiceError::FutureRevision { .. })));
    }

    #[test]
    fn deltas_compose_to_full_state() {
        let mut s = Session::new(config(2)).unwrap();
        let initial = s.full_state();
        s.mitigate((5, 5), Mitigation::Scratchline).unwrap();
        s.advance(30).unwrap();
        s.mitigate((1, 1), Mitigation::Fireline).unwrap();
        s.advance(5).unwrap();
        let mut grid = initial.grid.clone();
        for [r, c, code] in s.delta_since(0).unwrap().changed {
            grid[r][c] = code as u8;
        }
        assert_eq!(grid, s.full_state().grid);
        // and the coalesced delta lists exactly the cells that differ
        let diff = (0..24)
            .flat_map(|r| (0..24).map(move |c| (r, c)))
            .filter(|&(r, c)| initial.grid[r][c] != s.full_state().grid[r][c])
            .count();
        assert_eq!(diff, s.delta_since(0).unwrap().changed.len());
    }

    #[test]
    fn replay_reproduces_payloads() {
        let mut a = Session::new(config(3)).unwrap();
        a.mitigate((4, 4), Mitigation::Fireline).unwrap();
        a.advance(12).unwrap();
        let b = Session::replay(config(3), a.log()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.full_state()).unwrap(),
            serde_json::to_string(&b.full_state()).unwrap()
        );
    }

    #[test]
    fn quiesced_advance_is_a_fixed_point() {
        let mut s = Session::new(config(4)).unwrap();
        while s.advance(500).unwrap().active {}
        let counts = s.full_state().counts;
        let r = s.advance(3).unwrap();
        assert!(r.delta.changed.is_empty() && r.steps.is_empty());
        assert_eq!(r.delta.counts, counts);
        assert!(matches!(s.advance(0), Err(ServiceError::InvalidSteps(0))));
    }

    #[test]
    fn store_expires_idle_sessions() {
        let store = SessionStore::new(Duration::from_secs(60));
        store.insert("a".into(), Session::new(config(5)).unwrap());
        assert!(store.get("a").is_ok());
        assert!(store.purge_idle(Instant::now()).is_empty());
        assert_eq!(store.purge_idle(Instant::now() + Duration::from_secs(61)), vec!["a".to_string()]);
        assert!(matches!(store.get("a"), Err(ServiceError::NotFound(_))));
    }

    #[test]
    fn legend_lists_all_codes() {
        let l = legend();
        assert_eq!(l.len(), 7);
        assert_eq!(l[3].name, "fireline");
        assert_eq!(l[6].name, "agent");
    }
}
