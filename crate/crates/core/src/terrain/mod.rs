//! Fuel models, co-registered fuel/elevation layers and derived terrain
//! attributes.

mod fuel;
mod procedural;

pub use fuel::{FuelCatalog, FuelModel, NON_BURNABLE};
pub use procedural::{generate_procedural, FuelWeight, ProceduralParams};
pub(crate) use procedural::value_noise;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Grid};
use crate::gridfile::{self, GridFileError, RasterGrid};
use crate::wind::WindField;

/// Feet per meter. Elevation and fuel depth are in feet, cell edges in meters.
pub const FEET_PER_METER: f64 = 1.0 / 0.3048;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("unknown fuel id {0}")]
    UnknownFuel(i64),
    #[error("duplicate fuel id {0}")]
    DuplicateFuel(u16),
    #[error("invalid fuel model {id}: {reason}")]
    InvalidFuel { id: u16, reason: String },
    #[error("invalid dimensions {rows}x{cols}: {reason}")]
    InvalidDimensions {
        rows: usize,
        cols: usize,
        reason: &'static str,
    },
    #[error("{what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("non-finite elevation at {0:?}")]
    NonFiniteElevation(Cell),
    #[error(transparent)]
    GridFile(#[from] GridFileError),
    #[error("{path}: {reason}")]
    Bundle { path: PathBuf, reason: String },
}

/// Geographic anchor of the grid's north-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub lat: f64,
    pub lon: f64,
}

/// The world a fire burns through: fuel ids and elevation on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    fuel_id: Grid<u16>,
    elevation: Grid<f64>,
    cell_size: f64,
    origin: Option<Origin>,
    catalog: Arc<FuelCatalog>,
}

impl LayerStack {
    pub fn new(
        fuel_id: Grid<u16>,
        elevation: Grid<f64>,
        cell_size: f64,
        origin: Option<Origin>,
        catalog: Arc<FuelCatalog>,
    ) -> Result<Self, TerrainError> {
        if fuel_id.is_empty() {
            return Err(TerrainError::InvalidDimensions {
                rows: fuel_id.rows(),
                cols: fuel_id.cols(),
                reason: "grid is empty",
            });
        }
        if fuel_id.dims() != elevation.dims() {
            return Err(TerrainError::DimensionMismatch {
                what: "elevation layer".into(),
                expected: fuel_id.dims(),
                found: elevation.dims(),
            });
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(TerrainError::InvalidCellSize(cell_size));
        }
        if let Some(&bad) = fuel_id.iter().find(|id| !catalog.contains(**id)) {
            return Err(TerrainError::UnknownFuel(i64::from(bad)));
        }
        if let Some((cell, _)) = elevation.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(TerrainError::NonFiniteElevation(cell));
        }
        Ok(Self {
            fuel_id,
            elevation,
            cell_size,
            origin,
            catalog,
        })
    }

    /// Uniform fuel on flat ground; handy for experiments and tests.
    pub fn uniform(rows: usize, cols: usize, fuel: u16, cell_size: f64) -> Result<Self, TerrainError> {
        Self::new(
            Grid::filled(rows, cols, fuel),
            Grid::filled(rows, cols, 0.0),
            cell_size,
            None,
            Arc::new(FuelCatalog::standard()),
        )
    }

    pub fn with_elevation(self, elevation: Grid<f64>) -> Result<Self, TerrainError> {
        Self::new(self.fuel_id, elevation, self.cell_size, self.origin, self.catalog)
    }

    pub fn with_fuel(self, fuel_id: Grid<u16>) -> Result<Self, TerrainError> {
        Self::new(fuel_id, self.elevation, self.cell_size, self.origin, self.catalog)
    }

    pub fn with_origin(mut self, origin: Option<Origin>) -> Self {
        self.origin = origin;
        self
    }

    pub fn rows(&self) -> usize {
        self.fuel_id.rows()
    }

    pub fn cols(&self) -> usize {
        self.fuel_id.cols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fuel_id.dims()
    }

    pub fn area(&self) -> usize {
        self.fuel_id.len()
    }

    /// Cell edge length in meters.
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Option<Origin> {
        self.origin
    }

    pub fn fuel_ids(&self) -> &Grid<u16> {
        &self.fuel_id
    }

    pub fn elevation(&self) -> &Grid<f64> {
        &self.elevation
    }

    pub fn catalog(&self) -> &FuelCatalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> Arc<FuelCatalog> {
        Arc::clone(&self.catalog)
    }

    /// Fuel model at `cell`. Ids were validated at construction.
    pub fn fuel_at(&self, cell: Cell) -> &FuelModel {
        self.catalog
            .lookup(self.fuel_id[cell])
            .expect("fuel ids are validated on construction")
    }

    pub fn is_burnable(&self, cell: Cell) -> bool {
        self.fuel_at(cell).is_burnable()
    }
}

/// Terrain gradient summary for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeAspect {
    /// Rise over run, dimensionless.
    pub slope: f64,
    /// Compass bearing the slope faces (downhill direction), degrees in [0, 360).
    pub aspect: f64,
}

/// Per-cell slope and aspect from central differences, one-sided at borders.
pub fn slope_aspect(stack: &LayerStack) -> Grid<SlopeAspect> {
    let z = stack.elevation();
    let (rows, cols) = z.dims();
    let spacing = stack.cell_size() * FEET_PER_METER;

    let diff = |lo: f64, hi: f64, steps: f64| (hi - lo) / (steps * spacing);

    Grid::from_fn(rows, cols, |r, c| {
        // d/d(east)
        let dzdx = if cols < 2 {
            0.0
        } else if c == 0 {
            diff(z[(r, 0)], z[(r, 1)], 1.0)
        } else if c == cols - 1 {
            diff(z[(r, c - 1)], z[(r, c)], 1.0)
        } else {
            diff(z[(r, c - 1)], z[(r, c + 1)], 2.0)
        };
        // d/d(north); rows grow southward
        let dzdy = if rows < 2 {
            0.0
        } else if r == 0 {
            diff(z[(1, c)], z[(0, c)], 1.0)
        } else if r == rows - 1 {
            diff(z[(r, c)], z[(r - 1, c)], 1.0)
        } else {
            diff(z[(r + 1, c)], z[(r - 1, c)], 2.0)
        };
        let slope = dzdx.hypot(dzdy);
        let aspect = if slope == 0.0 {
            0.0
        } else {
            normalize_degrees((-dzdx).atan2(-dzdy).to_degrees())
        };
        SlopeAspect { slope, aspect }
    })
}

/// Maps any finite angle into [0, 360).
pub fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Observation attribute layers in the order they are usually listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    W0,
    Sigma,
    Delta,
    Mx,
    Elevation,
    WindSpeed,
    WindDirection,
}

impl Attribute {
    pub const ALL: [Attribute; 7] = [
        Attribute::W0,
        Attribute::Sigma,
        Attribute::Delta,
        Attribute::Mx,
        Attribute::Elevation,
        Attribute::WindSpeed,
        Attribute::WindDirection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::W0 => "w0",
            Attribute::Sigma => "sigma",
            Attribute::Delta => "delta",
            Attribute::Mx => "mx",
            Attribute::Elevation => "elevation",
            Attribute::WindSpeed => "wind_speed",
            Attribute::WindDirection => "wind_direction",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Value of this attribute at `cell` and fire timestep `t`.
    pub fn value(self, stack: &LayerStack, wind: &WindField, t: usize, cell: Cell) -> f64 {
        match self {
            Attribute::W0 => stack.fuel_at(cell).w0,
            Attribute::Sigma => stack.fuel_at(cell).sigma,
            Attribute::Delta => stack.fuel_at(cell).delta,
            Attribute::Mx => stack.fuel_at(cell).mx,
            Attribute::Elevation => stack.elevation()[cell],
            Attribute::WindSpeed => wind.sample(t, cell).speed,
            Attribute::WindDirection => wind.sample(t, cell).direction,
        }
    }
}

/// Observed (min, max) of every attribute over a stack and wind field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub w0: (f64, f64),
    pub sigma: (f64, f64),
    pub delta: (f64, f64),
    pub mx: (f64, f64),
    pub elevation: (f64, f64),
    pub wind_speed: (f64, f64),
    pub wind_direction: (f64, f64),
}

impl LayerBounds {
    pub fn get(&self, attr: Attribute) -> (f64, f64) {
        match attr {
            Attribute::W0 => self.w0,
            Attribute::Sigma => self.sigma,
            Attribute::Delta => self.delta,
            Attribute::Mx => self.mx,
            Attribute::Elevation => self.elevation,
            Attribute::WindSpeed => self.wind_speed,
            Attribute::WindDirection => self.wind_direction,
        }
    }

    /// Min-max scaling into [0, 1]; constant layers map to 0.
    pub fn normalize(&self, attr: Attribute, value: f64) -> f64 {
        let (lo, hi) = self.get(attr);
        if hi > lo {
            ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

fn widen(b: &mut (f64, f64), v: f64) {
    b.0 = b.0.min(v);
    b.1 = b.1.max(v);
}

pub fn layer_bounds(stack: &LayerStack, wind: &WindField) -> LayerBounds {
    let empty = (f64::INFINITY, f64::NEG_INFINITY);
    let mut b = LayerBounds {
        w0: empty,
        sigma: empty,
        delta: empty,
        mx: empty,
        elevation: empty,
        wind_speed: empty,
        wind_direction: empty,
    };
    let mut seen = std::collections::BTreeSet::new();
    for &id in stack.fuel_ids().iter() {
        if seen.insert(id) {
            let f = stack.catalog().lookup(id).expect("validated");
            widen(&mut b.w0, f.w0);
            widen(&mut b.sigma, f.sigma);
            widen(&mut b.delta, f.delta);
            widen(&mut b.mx, f.mx);
        }
    }
    for &z in stack.elevation().iter() {
        widen(&mut b.elevation, z);
    }
    let (speed, direction) = wind.bounds();
    b.wind_speed = speed;
    b.wind_direction = direction;
    b
}

/// Which layer a raster file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterAttribute {
    Fuel,
    Elevation,
}

/// Reads one layer file. Fuel rasters must hold integer ids; `expect` checks
/// the dimensions against an existing stack.
pub fn load_raster(
    path: &Path,
    attribute: RasterAttribute,
    expect: Option<(usize, usize)>,
) -> Result<Grid<f64>, TerrainError> {
    let raster = gridfile::read(path)?;
    if let Some(expected) = expect {
        if raster.dims() != expected {
            return Err(TerrainError::DimensionMismatch {
                what: path.display().to_string(),
                expected,
                found: raster.dims(),
            });
        }
    }
    if attribute == RasterAttribute::Fuel {
        if let RasterGrid::F32(g) = &raster {
            if let Some((cell, v)) = g.indexed_iter().find(|(_, v)| v.fract() != 0.0) {
                return Err(TerrainError::Bundle {
                    path: path.to_path_buf(),
                    reason: format!("fuel id {v} at {cell:?} is not an integer"),
                });
            }
        }
    }
    Ok(raster.to_f64())
}

/// Converts a loaded fuel raster to catalog ids, rejecting ids the catalog
/// does not hold.
pub fn bind_fuel(raw: &Grid<f64>, catalog: &FuelCatalog) -> Result<Grid<u16>, TerrainError> {
    let mut out = Vec::with_capacity(raw.len());
    for &v in raw.iter() {
        let id = v as i64;
        match u16::try_from(id) {
            Ok(id) if catalog.contains(id) => out.push(id),
            _ => return Err(TerrainError::UnknownFuel(id)),
        }
    }
    Ok(Grid::from_vec(raw.rows(), raw.cols(), out).expect("same size"))
}

/// Contents of a bundle's `meta.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub cell_size: f64,
    #[serde(default)]
    pub origin: Option<[f64; 2]>,
}

pub const BUNDLE_FUEL: &str = "fuel.grid";
pub const BUNDLE_ELEVATION: &str = "elevation.grid";
pub const BUNDLE_META: &str = "meta.toml";

/// Loads a scenario bundle directory (`fuel.grid`, `elevation.grid`, `meta.toml`).
pub fn load_bundle(dir: &Path, catalog: Arc<FuelCatalog>) -> Result<LayerStack, TerrainError> {
    let meta_path = dir.join(BUNDLE_META);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| TerrainError::Bundle {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    let meta: BundleMeta = toml::from_str(&meta_text).map_err(|e| TerrainError::Bundle {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    let fuel_raw = load_raster(&dir.join(BUNDLE_FUEL), RasterAttribute::Fuel, None)?;
    let elevation = load_raster(
        &dir.join(BUNDLE_ELEVATION),
        RasterAttribute::Elevation,
        Some(fuel_raw.dims()),
    )?;
    let fuel = bind_fuel(&fuel_raw, &catalog)?;
    LayerStack::new(
        fuel,
        elevation,
        meta.cell_size,
        meta.origin.map(|[lat, lon]| Origin { lat, lon }),
        catalog,
    )
}

/// Writes `stack` as a bundle directory readable by [`load_bundle`].
pub fn write_bundle(dir: &Path, stack: &LayerStack) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    gridfile::write_i32(&dir.join(BUNDLE_FUEL), &stack.fuel_ids().map(|&v| i32::from(v)))?;
    gridfile::write_f32(&dir.join(BUNDLE_ELEVATION), &stack.elevation().map(|&v| v as f32))?;
    let meta = BundleMeta {
        cell_size: stack.cell_size(),
        origin: stack.origin().map(|o| [o.lat, o.lon]),
    };
    fs::write(
        dir.join(BUNDLE_META),
        toml::to_string(&meta).map_err(std::io::Error::other)?,
    )
}
