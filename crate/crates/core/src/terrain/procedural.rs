use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FuelCatalog, LayerStack, Origin, TerrainError};
use crate::grid::Grid;
use crate::seed::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelWeight {
    pub fuel: u16,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProceduralParams {
    /// Fractal octaves of the elevation noise.
    pub octaves: u32,
    /// Amplitude ratio between successive octaves.
    pub persistence: f64,
    /// Wavelength of the coarsest octave, in cells.
    pub scale: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    /// Fuel ids and their target area fractions.
    pub fuel_mix: Vec<FuelWeight>,
    /// Wavelength of the fuel patch noise, in cells.
    pub fuel_scale: f64,
}

impl Default for ProceduralParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            persistence: 0.5,
            scale: 32.0,
            elevation_min: 1000.0,
            elevation_max: 1600.0,
            fuel_mix: vec![
                FuelWeight { fuel: 1, weight: 0.45 },
                FuelWeight { fuel: 2, weight: 0.25 },
                FuelWeight { fuel: 5, weight: 0.2 },
                FuelWeight { fuel: 0, weight: 0.1 },
            ],
            fuel_scale: 12.0,
        }
    }
}

impl ProceduralParams {
    fn validate(&self) -> Result<(), TerrainError> {
        let bad = |reason: String| TerrainError::Bundle {
            path: "procedural".into(),
            reason,
        };
        if self.octaves == 0 {
            return Err(bad("octaves must be >= 1".into()));
        }
        if !(self.scale > 0.0 && self.fuel_scale > 0.0) {
            return Err(bad("noise scales must be positive".into()));
        }
        if !(self.persistence > 0.0 && self.persistence.is_finite()) {
            return Err(bad("persistence must be positive".into()));
        }
        if self.elevation_min.is_nan() || self.elevation_max.is_nan() || self.elevation_min > self.elevation_max {
            return Err(bad("elevation_min must not exceed elevation_max".into()));
        }
        if self.fuel_mix.is_empty() || self.fuel_mix.iter().any(|w| w.weight.is_nan() || w.weight < 0.0) {
            return Err(bad("fuel_mix needs at least one non-negative weight".into()));
        }
        if self.fuel_mix.iter().map(|w| w.weight).sum::<f64>() <= 0.0 {
            return Err(bad("fuel_mix weights sum to zero".into()));
        }
        Ok(())
    }
}

/// Lattice value in [0, 1) from a hash of (seed, octave, ix, iy).
fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let mut h = splitmix64(seed ^ u64::from(octave).wrapping_mul(0xA076_1D64_78BD_642F));
    h = splitmix64(h ^ (ix as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB));
    h = splitmix64(h ^ (iy as u64).wrapping_mul(0x8EBC_6AF0_9C88_C6E3));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

pub(crate) fn value_noise(seed: u64, octave: u32, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - x0), smooth(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = lattice(seed, octave, ix, iy);
    let v10 = lattice(seed, octave, ix + 1, iy);
    let v01 = lattice(seed, octave, ix, iy + 1);
    let v11 = lattice(seed, octave, ix + 1, iy + 1);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Fractal value noise rescaled to span [0, 1] over the grid.
fn fractal_field(seed: u64, rows: usize, cols: usize, octaves: u32, persistence: f64, scale: f64) -> Grid<f64> {
    let raw = Grid::from_fn(rows, cols, |r, c| {
        let (mut amp, mut freq, mut sum) = (1.0, 1.0 / scale, 0.0);
        for o in 0..octaves {
            sum += amp * value_noise(seed, o, c as f64 * freq, r as f64 * freq);
            amp *= persistence;
            freq *= 2.0;
        }
        sum
    });
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.map(|v| (v - lo) / (hi - lo))
    } else {
        raw.map(|_| 0.0)
    }
}

/// Deterministic synthetic terrain: fractal elevation plus fuel patches whose
/// area fractions follow `params.fuel_mix` (assigned by noise rank).
pub fn generate_procedural(
    seed: u64,
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: Option<Origin>,
    params: &ProceduralParams,
    catalog: Arc<FuelCatalog>,
) -> Result<LayerStack, TerrainError> {
    if rows < 2 || cols < 2 {
        return Err(TerrainError::InvalidDimensions {
            rows,
            cols,
            reason: "procedural terrain needs at least 2x2 cells",
        });
    }
    params.validate()?;
    for w in &params.fuel_mix {
        catalog.lookup(w.fuel)?;
    }

    let elev_seed = splitmix64(seed ^ 0x656c_6576);
    let fuel_seed = splitmix64(seed ^ 0x6675_656c);
    let height = fractal_field(elev_seed, rows, cols, params.octaves, params.persistence, params.scale);
    let elevation = height.map(|h| params.elevation_min + h * (params.elevation_max - params.elevation_min));

    let patches = fractal_field(fuel_seed, rows, cols, 2, 0.5, params.fuel_scale);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let p = patches.as_slice();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));

    let total: f64 = params.fuel_mix.iter().map(|w| w.weight).sum();
    let n = order.len();
    let mut fuel = vec![params.fuel_mix[0].fuel; n];
    let mut cumulative = 0.0;
    let mut start = 0usize;
    for (i, w) in params.fuel_mix.iter().enumerate() {
        cumulative += w.weight;
        let end = if i + 1 == params.fuel_mix.len() {
            n
        } else {
            ((cumulative / total) * n as f64).round() as usize
        };
        for &idx in &order[start..end.max(start)] {
            fuel[idx] = w.fuel;
        }
        start = end.max(start);
    }

    LayerStack::new(
        Grid::from_vec(rows, cols, fuel).expect("sized"),
        elevation,
        cell_size,
        origin,
        catalog,
    )
}
