//! Cellular fire propagation driven by the Rothermel kernel.
//!
//! Each burning cell accumulates spread distance toward its eight neighbors.
//! A neighbor ignites once the accumulated distance reaches the crossing
//! distance (one cell edge orthogonally, edge * sqrt(2) diagonally). Wind and
//! slope enter through their cosine projection onto the neighbor bearing,
//! floored at zero.

mod rothermel;

pub use rothermel::{rothermel_ros, FuelCoefficients, FT_PER_MIN_PER_MPH};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Grid};
use crate::terrain::{slope_aspect, LayerStack, SlopeAspect, FEET_PER_METER};
use crate::wind::WindField;

#[derive(Debug, Error, PartialEq)]
pub enum FireError {
    #[error("cell {cell:?} is outside the {rows}x{cols} grid")]
    OutOfBounds { cell: Cell, rows: usize, cols: usize },
    #[error("dimension mismatch: state is {state:?}, layers are {layers:?}")]
    DimensionMismatch {
        state: (usize, usize),
        layers: (usize, usize),
    },
    #[error("invalid fire config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Per-cell burn/mitigation status. The discriminants are the wire encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum CellStatus {
    Unburned = 0,
    Burning = 1,
    Burned = 2,
    Fireline = 3,
    Scratchline = 4,
    Wetline = 5,
}

/// Reserved code marking the agent's cell in fire-map observations.
pub const AGENT_CODE: u8 = 6;
pub const MAX_STATUS_CODE: u8 = AGENT_CODE;

impl CellStatus {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::Unburned,
            1 => Self::Burning,
            2 => Self::Burned,
            3 => Self::Fireline,
            4 => Self::Scratchline,
            5 => Self::Wetline,
            _ => return None,
        })
    }

    pub fn is_mitigated(self) -> bool {
        matches!(self, Self::Fireline | Self::Scratchline | Self::Wetline)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Unburned => "unburned",
            Self::Burning => "burning",
            Self::Burned => "burned",
            Self::Fireline => "fireline",
            Self::Scratchline => "scratchline",
            Self::Wetline => "wetline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mitigation {
    Fireline,
    Scratchline,
    Wetline,
}

impl Mitigation {
    pub const ALL: [Mitigation; 3] = [Mitigation::Fireline, Mitigation::Scratchline, Mitigation::Wetline];

    pub fn status(self) -> CellStatus {
        match self {
            Mitigation::Fireline => CellStatus::Fireline,
            Mitigation::Scratchline => CellStatus::Scratchline,
            Mitigation::Wetline => CellStatus::Wetline,
        }
    }

    pub fn name(self) -> &'static str {
        self.status().name()
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// How the ignition cell is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ignition {
    Cell([usize; 2]),
    Named(IgnitionMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IgnitionMode {
    /// Uniform over burnable cells, drawn from the ignition sub-seed.
    Random,
}

impl Ignition {
    pub const RANDOM: Ignition = Ignition::Named(IgnitionMode::Random);

    pub fn at(r: usize, c: usize) -> Self {
        Ignition::Cell([r, c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FireConfig {
    /// Minutes of fire time per fire step.
    pub dt: f64,
    /// Global rate-of-spread multiplier.
    pub attenuation: f64,
    /// Multiplier on spread into scratchline cells.
    pub scratchline: f64,
    /// Multiplier on spread into wetline cells.
    pub wetline: f64,
    /// Steps a cell burns before it is spent.
    pub max_fire_duration: u32,
    /// Dead fuel moisture, fraction.
    pub dead_fuel_moisture: f64,
    pub ignition: Ignition,
}

impl Default for FireConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            attenuation: 1.0,
            scratchline: 0.4,
            wetline: 0.25,
            max_fire_duration: 30,
            dead_fuel_moisture: 0.03,
            ignition: Ignition::RANDOM,
        }
    }
}

impl FireConfig {
    pub fn validate(&self) -> Result<(), FireError> {
        let bad = |m: &str| Err(FireError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        for (name, m) in [
            ("attenuation", self.attenuation),
            ("scratchline", self.scratchline),
            ("wetline", self.wetline),
        ] {
            if !(0.0..=1.0).contains(&m) {
                return Err(FireError::InvalidConfig(format!("{name} multiplier must lie in [0, 1], got {m}")));
            }
        }
        if self.max_fire_duration < 1 {
            return bad("max_fire_duration must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dead_fuel_moisture) {
            return bad("dead_fuel_moisture must lie in [0, 1)");
        }
        Ok(())
    }

    /// Multiplier applied to spread into a cell with `status`.
    pub fn target_multiplier(&self, status: CellStatus) -> f64 {
        match status {
            CellStatus::Unburned => 1.0,
            CellStatus::Scratchline => self.scratchline,
            CellStatus::Wetline => self.wetline,
            CellStatus::Fireline | CellStatus::Burning | CellStatus::Burned => 0.0,
        }
    }
}

/// Neighbor offsets clockwise from north, with their compass bearings.
pub const NEIGHBORS: [(isize, isize, f64); 8] = [
    (-1, 0, 0.0),
    (-1, 1, 45.0),
    (0, 1, 90.0),
    (1, 1, 135.0),
    (1, 0, 180.0),
    (1, -1, 225.0),
    (0, -1, 270.0),
    (-1, -1, 315.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct FireState {
    status: Grid<CellStatus>,
    /// meters accumulated toward each neighbor, valid while Burning
    progress: Grid<[f64; 8]>,
    burn_age: Grid<u32>,
    t: usize,
}

/// Exact tallies of a status grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DamageCounts {
    pub burned: usize,
    pub burning: usize,
    pub mitigated: usize,
    pub unburned: usize,
}

impl FireState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            status: Grid::filled(rows, cols, CellStatus::Unburned),
            progress: Grid::filled(rows, cols, [0.0; 8]),
            burn_age: Grid::filled(rows, cols, 0),
            t: 0,
        }
    }

    pub fn for_stack(stack: &LayerStack) -> Self {
        Self::new(stack.rows(), stack.cols())
    }

    pub fn status(&self) -> &Grid<CellStatus> {
        &self.status
    }

    pub fn status_at(&self, cell: Cell) -> CellStatus {
        self.status[cell]
    }

    pub fn progress_at(&self, cell: Cell) -> &[f64; 8] {
        &self.progress[cell]
    }

    pub fn burn_age_at(&self, cell: Cell) -> u32 {
        self.burn_age[cell]
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dims(&self) -> (usize, usize) {
        self.status.dims()
    }

    fn check(&self, cell: Cell) -> Result<(), FireError> {
        if self.status.contains(cell) {
            Ok(())
        } else {
            Err(FireError::OutOfBounds {
                cell,
                rows: self.status.rows(),
                cols: self.status.cols(),
            })
        }
    }

    /// Sets an Unburned cell burning. Returns whether the cell changed.
    pub fn ignite(&mut self, cell: Cell) -> Result<bool, FireError> {
        self.check(cell)?;
        if self.status[cell] != CellStatus::Unburned {
            return Ok(false);
        }
        self.status[cell] = CellStatus::Burning;
        self.progress[cell] = [0.0; 8];
        self.burn_age[cell] = 0;
        Ok(true)
    }

    /// Places a mitigation on an Unburned cell. Mitigated, burning and burned
    /// cells are left alone. Returns whether the cell changed.
    pub fn apply_mitigation(&mut self, cell: Cell, kind: Mitigation) -> Result<bool, FireError> {
        self.check(cell)?;
        if self.status[cell] != CellStatus::Unburned {
            return Ok(false);
        }
        self.status[cell] = kind.status();
        Ok(true)
    }

    pub fn is_active(&self) -> bool {
        self.status.iter().any(|&s| s == CellStatus::Burning)
    }

    pub fn damage_counts(&self) -> DamageCounts {
        let mut d = DamageCounts::default();
        for &s in self.status.iter() {
            match s {
                CellStatus::Unburned => d.unburned += 1,
                CellStatus::Burning => d.burning += 1,
                CellStatus::Burned => d.burned += 1,
                _ => d.mitigated += 1,
            }
        }
        d
    }

    pub fn status_codes(&self) -> Grid<i32> {
        self.status.map(|s| i32::from(s.code()))
    }
}

/// Precomputed per-scenario inputs of the spread step.
#[derive(Debug, Clone)]
pub struct FireEngine {
    stack: Arc<LayerStack>,
    wind: WindField,
    config: FireConfig,
    coefficients: Vec<Option<FuelCoefficients>>,
    terrain: Grid<SlopeAspect>,
    /// ft/min of spread -> meters per step
    meters_per_step: f64,
}

impl FireEngine {
    pub fn new(stack: Arc<LayerStack>, wind: WindField, config: &FireConfig) -> Result<Self, FireError> {
        config.validate()?;
        if let Some(dims) = wind.dims() {
            if dims != stack.dims() {
                return Err(FireError::DimensionMismatch {
                    state: dims,
                    layers: stack.dims(),
                });
            }
        }
        let mut coefficients = vec![None; usize::from(stack.catalog().max_id()) + 1];
        for f in stack.catalog().models() {
            coefficients[usize::from(f.id)] = Some(FuelCoefficients::new(f));
        }
        Ok(Self {
            config: config.clone(),
            coefficients,
            terrain: slope_aspect(&stack),
            meters_per_step: config.dt / FEET_PER_METER,
            stack,
            wind,
        })
    }

    pub fn config(&self) -> &FireConfig {
        &self.config
    }

    pub fn stack(&self) -> &LayerStack {
        &self.stack
    }

    pub fn wind(&self) -> &WindField {
        &self.wind
    }

    fn coefficients_at(&self, cell: Cell) -> &FuelCoefficients {
        self.coefficients[usize::from(self.stack.fuel_ids()[cell])]
            .as_ref()
            .expect("fuel ids are validated")
    }

    /// Unattenuated ROS (ft/min) for fire leaving `source` toward neighbor
    /// `dir` (index into [`NEIGHBORS`]) at fire step `t`, using the target
    /// cell's fuel with wind and slope projected on the neighbor bearing.
    pub fn directional_ros(&self, source: Cell, dir: usize, t: usize) -> Option<f64> {
        let target = self.neighbor(source, dir)?;
        let (wind, slope) = self.directional_inputs(source, dir, t);
        Some(
            self.coefficients_at(target)
                .ros(self.config.dead_fuel_moisture, wind, slope),
        )
    }

    /// (midflame wind mph, slope rise/run) along neighbor bearing `dir`.
    pub fn directional_inputs(&self, source: Cell, dir: usize, t: usize) -> (f64, f64) {
        let bearing = NEIGHBORS[dir].2;
        let w = self.wind.sample(t, source);
        let wind = w.speed * (w.direction - bearing).to_radians().cos().max(0.0);
        let sa = self.terrain[source];
        let upslope = sa.aspect + 180.0;
        let slope = sa.slope * (upslope - bearing).to_radians().cos().max(0.0);
        (wind, slope)
    }

    #[inline]
    fn neighbor(&self, (r, c): Cell, dir: usize) -> Option<Cell> {
        let (dr, dc, _) = NEIGHBORS[dir];
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        (nr < self.stack.rows() && nc < self.stack.cols()).then_some((nr, nc))
    }

    fn crossing(&self, dir: usize) -> f64 {
        if dir.is_multiple_of(2) {
            self.stack.cell_size()
        } else {
            self.stack.cell_size() * std::f64::consts::SQRT_2
        }
    }

    /// Advances the fire one step.
    pub fn step(&self, state: &mut FireState) -> Result<(), FireError> {
        if state.dims() != self.stack.dims() {
            return Err(FireError::DimensionMismatch {
                state: state.dims(),
                layers: self.stack.dims(),
            });
        }
        let t = state.t;
        let cols = self.stack.cols();
        let mut ignitions = Vec::new();
        let mut burning = Vec::new();

        for idx in 0..state.status.len() {
            if state.status.as_slice()[idx] != CellStatus::Burning {
                continue;
            }
            burning.push(idx);
            let source = (idx / cols, idx % cols);
            for dir in 0..NEIGHBORS.len() {
                let Some(target) = self.neighbor(source, dir) else { continue };
                let multiplier = self.config.target_multiplier(state.status[target]);
                if multiplier == 0.0 {
                    continue;
                }
                let coeff = self.coefficients_at(target);
                if !coeff.is_burnable() {
                    continue;
                }
                let crossing = self.crossing(dir);
                let acc = state.progress[source][dir];
                if acc >= crossing {
                    continue;
                }
                let (wind, slope) = self.directional_inputs(source, dir, t);
                let ros = coeff.ros(self.config.dead_fuel_moisture, wind, slope)
                    * self.config.attenuation
                    * multiplier;
                let next = (acc + ros * self.meters_per_step).min(crossing);
                state.progress[source][dir] = next;
                if next >= crossing {
                    ignitions.push(target);
                }
            }
        }

        for idx in burning {
            let cell = (idx / cols, idx % cols);
            state.burn_age[cell] += 1;
            if state.burn_age[cell] >= self.config.max_fire_duration {
                state.status[cell] = CellStatus::Burned;
                state.progress[cell] = [0.0; 8];
            }
        }
        for cell in ignitions {
            let s = state.status[cell];
            if s != CellStatus::Burning && s != CellStatus::Burned {
                state.status[cell] = CellStatus::Burning;
                state.progress[cell] = [0.0; 8];
                state.burn_age[cell] = 0;
            }
        }
        state.t += 1;
        Ok(())
    }
}

/// One-shot step; copies the layers into a fresh engine each call. Prefer
/// [`FireEngine`] in loops.
pub fn step_fire(state: &mut FireState, stack: &LayerStack, wind: &WindField, config: &FireConfig) -> Result<(), FireError> {
    FireEngine::new(Arc::new(stack.clone()), wind.clone(), config)?.step(state)
}
