//! Wind speed and direction per cell and fire timestep.
//!
//! Directions are compass bearings of travel: 0 means the air moves toward
//! grid north (row 0), 90 toward the east (increasing column).

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, Grid};
use crate::gridfile;
use crate::seed::{self, splitmix64};
use crate::terrain::{normalize_degrees, value_noise};

#[derive(Debug, Error, PartialEq)]
pub enum WindError {
    #[error("wind speed must be finite and non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("viscosity must be positive, got {0}")]
    NonPositiveViscosity(f64),
    #[error("wind field needs at least one step")]
    NoSteps,
    #[error("invalid wind parameter: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindMode {
    Constant,
    Generated,
    Fluid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindSample {
    /// mph
    pub speed: f64,
    /// degrees in [0, 360)
    pub direction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindFrame {
    pub speed: Grid<f64>,
    pub direction: Grid<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Constant(WindSample),
    Frames(Arc<Vec<WindFrame>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    mode: WindMode,
    repr: Repr,
}

impl WindField {
    pub fn constant(speed: f64, direction: f64) -> Result<Self, WindError> {
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(WindError::NegativeSpeed(speed));
        }
        if !direction.is_finite() {
            return Err(WindError::Invalid("direction must be finite"));
        }
        Ok(Self {
            mode: WindMode::Constant,
            repr: Repr::Constant(WindSample {
                speed,
                direction: normalize_degrees(direction),
            }),
        })
    }

    /// Wraps precomputed frames. Speeds must be non-negative; directions are
    /// normalized.
    pub fn from_frames(mode: WindMode, frames: Vec<WindFrame>) -> Result<Self, WindError> {
        if frames.is_empty() {
            return Err(WindError::NoSteps);
        }
        let dims = frames[0].speed.dims();
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            if f.speed.dims() != dims || f.direction.dims() != dims {
                return Err(WindError::Invalid("frame dimensions differ"));
            }
            if let Some(&s) = f.speed.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
                return Err(WindError::NegativeSpeed(s));
            }
            if f.direction.iter().any(|d| !d.is_finite()) {
                return Err(WindError::Invalid("direction must be finite"));
            }
            out.push(WindFrame {
                speed: f.speed,
                direction: f.direction.map(|&d| normalize_degrees(d)),
            });
        }
        Ok(Self {
            mode,
            repr: Repr::Frames(Arc::new(out)),
        })
    }

    pub fn mode(&self) -> WindMode {
        self.mode
    }

    /// Number of stored frames; `None` for constant fields.
    pub fn horizon(&self) -> Option<usize> {
        match &self.repr {
            Repr::Constant(_) => None,
            Repr::Frames(f) => Some(f.len()),
        }
    }

    /// Grid dimensions of frame-based fields.
    pub fn dims(&self) -> Option<(usize, usize)> {
        match &self.repr {
            Repr::Constant(_) => None,
            Repr::Frames(f) => Some(f[0].speed.dims()),
        }
    }

    pub fn frames(&self) -> &[WindFrame] {
        match &self.repr {
            Repr::Constant(_) => &[],
            Repr::Frames(f) => f,
        }
    }

    /// Wind at fire timestep `t`; beyond the stored horizon the last frame holds.
    #[inline]
    pub fn sample(&self, t: usize, cell: Cell) -> WindSample {
        match &self.repr {
            Repr::Constant(s) => *s,
            Repr::Frames(frames) => {
                let f = &frames[t.min(frames.len() - 1)];
                WindSample {
                    speed: f.speed[cell],
                    direction: f.direction[cell],
                }
            }
        }
    }

    /// (speed, direction) observed bounds over every frame.
    pub fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        match &self.repr {
            Repr::Constant(s) => ((s.speed, s.speed), (s.direction, s.direction)),
            Repr::Frames(frames) => {
                let mut sb = (f64::INFINITY, f64::NEG_INFINITY);
                let mut db = sb;
                for f in frames.iter() {
                    for &v in f.speed.iter() {
                        sb = (sb.0.min(v), sb.1.max(v));
                    }
                    for &v in f.direction.iter() {
                        db = (db.0.min(v), db.1.max(v));
                    }
                }
                (sb, db)
            }
        }
    }

    /// Writes `wind_speed_NNNN.grid` and `wind_direction_NNNN.grid` per frame.
    /// Constant fields are written as a single 1x1 frame.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let write = |i: usize, speed: &Grid<f64>, dirn: &Grid<f64>| -> std::io::Result<()> {
            gridfile::write_f32(&dir.join(format!("wind_speed_{i:04}.grid")), &speed.map(|&v| v as f32))?;
            gridfile::write_f32(&dir.join(format!("wind_direction_{i:04}.grid")), &dirn.map(|&v| v as f32))
        };
        match &self.repr {
            Repr::Constant(s) => write(0, &Grid::filled(1, 1, s.speed), &Grid::filled(1, 1, s.direction)),
            Repr::Frames(frames) => {
                for (i, f) in frames.iter().enumerate() {
                    write(i, &f.speed, &f.direction)?;
                }
                Ok(())
            }
        }
    }
}

/// Speed/direction from an (east, north) velocity.
pub fn polar_from_components(east: f64, north: f64) -> WindSample {
    let speed = east.hypot(north);
    let direction = if speed == 0.0 {
        0.0
    } else {
        normalize_degrees(east.atan2(north).to_degrees())
    };
    WindSample { speed, direction }
}

/// Noise-perturbed wind around a base speed and direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseWindParams {
    pub base_speed: f64,
    pub base_direction: f64,
    /// Maximum absolute speed deviation, mph.
    pub speed_jitter: f64,
    /// Maximum absolute direction deviation, degrees.
    pub direction_jitter: f64,
    /// Spatial wavelength of the perturbation, cells.
    pub scale: f64,
    /// Perturbation drift per frame, in noise-lattice units.
    pub drift: f64,
}

impl Default for NoiseWindParams {
    fn default() -> Self {
        Self {
            base_speed: 5.0,
            base_direction: 90.0,
            speed_jitter: 2.0,
            direction_jitter: 30.0,
            scale: 24.0,
            drift: 0.05,
        }
    }
}

pub fn generate_wind_noise(
    seed: u64,
    rows: usize,
    cols: usize,
    steps: usize,
    params: &NoiseWindParams,
) -> Result<WindField, WindError> {
    if steps == 0 {
        return Err(WindError::NoSteps);
    }
    if !(params.base_speed >= 0.0 && params.speed_jitter >= 0.0 && params.scale > 0.0) {
        return Err(WindError::Invalid("noise wind needs non-negative speeds and a positive scale"));
    }
    let (s_seed, d_seed) = (splitmix64(seed ^ 1), splitmix64(seed ^ 2));
    let frames = (0..steps)
        .map(|t| {
            let shift = t as f64 * params.drift;
            let noise = |sd: u64, r: usize, c: usize| {
                2.0 * value_noise(sd, 0, c as f64 / params.scale + shift, r as f64 / params.scale) - 1.0
            };
            WindFrame {
                speed: Grid::from_fn(rows, cols, |r, c| {
                    (params.base_speed + params.speed_jitter * noise(s_seed, r, c)).max(0.0)
                }),
                direction: Grid::from_fn(rows, cols, |r, c| {
                    params.base_direction + params.direction_jitter * noise(d_seed, r, c)
                }),
            }
        })
        .collect();
    WindField::from_frames(WindMode::Generated, frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidParams {
    /// Kinematic viscosity, cells^2 per solver step.
    pub viscosity: f64,
    /// Solver time step; back-trace distance is velocity * dt cells.
    pub dt: f64,
    /// Uniform initial flow, mph.
    pub initial_speed: f64,
    pub initial_direction: f64,
    /// Amplitude of the seeded body force, mph per solver step.
    pub forcing: f64,
    /// Number of random Fourier modes in the body force.
    pub forcing_modes: usize,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            viscosity: 0.5,
            dt: 0.1,
            initial_speed: 5.0,
            initial_direction: 90.0,
            forcing: 1.0,
            forcing_modes: 4,
        }
    }
}

/// Periodic 2D FFT helper.
struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(rows: usize, cols: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: p.plan_fft_forward(cols),
            row_inv: p.plan_fft_inverse(cols),
            col_fwd: p.plan_fft_forward(rows),
            col_inv: p.plan_fft_inverse(rows),
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (row_fft, col_fft) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for row in data.chunks_exact_mut(self.cols) {
            row_fft.process(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = data[r * self.cols + c];
            }
            col_fft.process(&mut column);
            for r in 0..self.rows {
                data[r * self.cols + c] = column[r];
            }
        }
        if inverse {
            let scale = 1.0 / (self.rows * self.cols) as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    fn forward(&self, g: &Grid<f64>) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut d, false);
        d
    }

    fn inverse(&self, mut d: Vec<Complex64>) -> Grid<f64> {
        self.transform(&mut d, true);
        Grid::from_vec(self.rows, self.cols, d.into_iter().map(|z| z.re).collect()).expect("sized")
    }
}

/// Stable-fluids solver on a periodic grid: advect, diffuse, project.
///
/// Velocity is held in grid axes: `vx` along increasing column (east), `vy`
/// along increasing row (south). Diffusion and projection are solved exactly
/// in Fourier space against the same central-difference divergence stencil
/// used by [`FluidSolver::divergence`], so projected fields are discretely
/// divergence-free up to round-off.
pub struct FluidSolver {
    rows: usize,
    cols: usize,
    fft: Fft2,
    /// central-difference symbols sin(2 pi k / n)
    sx: Vec<f64>,
    sy: Vec<f64>,
    /// 5-point Laplacian symbol magnitude per mode
    lap: Vec<f64>,
}

impl FluidSolver {
    pub fn new(rows: usize, cols: usize) -> Self {
        let tau = std::f64::consts::TAU;
        let sx: Vec<f64> = (0..cols).map(|k| (tau * k as f64 / cols as f64).sin()).collect();
        let sy: Vec<f64> = (0..rows).map(|k| (tau * k as f64 / rows as f64).sin()).collect();
        let mut lap = Vec::with_capacity(rows * cols);
        for ky in 0..rows {
            for kx in 0..cols {
                let a = (std::f64::consts::PI * kx as f64 / cols as f64).sin();
                let b = (std::f64::consts::PI * ky as f64 / rows as f64).sin();
                lap.push(4.0 * (a * a + b * b));
            }
        }
        Self {
            rows,
            cols,
            fft: Fft2::new(rows, cols),
            sx,
            sy,
            lap,
        }
    }

    /// Periodic central-difference divergence.
    pub fn divergence(vx: &Grid<f64>, vy: &Grid<f64>) -> Grid<f64> {
        let (rows, cols) = vx.dims();
        Grid::from_fn(rows, cols, |r, c| {
            let (cp, cm) = ((c + 1) % cols, (c + cols - 1) % cols);
            let (rp, rm) = ((r + 1) % rows, (r + rows - 1) % rows);
            0.5 * (vx[(r, cp)] - vx[(r, cm)]) + 0.5 * (vy[(rp, c)] - vy[(rm, c)])
        })
    }

    /// Removes the divergent part of (vx, vy).
    pub fn project(&self, vx: &mut Grid<f64>, vy: &mut Grid<f64>) {
        let mut fx = self.fft.forward(vx);
        let mut fy = self.fft.forward(vy);
        for ky in 0..self.rows {
            for kx in 0..self.cols {
                let i = ky * self.cols + kx;
                let (a, b) = (self.sx[kx], self.sy[ky]);
                let norm = a * a + b * b;
                if norm > 1e-12 {
                    let dot = fx[i] * a + fy[i] * b;
                    fx[i] -= dot * (a / norm);
                    fy[i] -= dot * (b / norm);
                }
            }
        }
        *vx = self.fft.inverse(fx);
        *vy = self.fft.inverse(fy);
    }

    /// Implicit diffusion `(I - nu dt L) v' = v`, solved per Fourier mode.
    pub fn diffuse(&self, v: &mut Grid<f64>, viscosity: f64, dt: f64) {
        let mut f = self.fft.forward(v);
        for (z, &l) in f.iter_mut().zip(&self.lap) {
            *z /= 1.0 + viscosity * dt * l;
        }
        *v = self.fft.inverse(f);
    }

    /// Semi-Lagrangian advection of `q` by (vx, vy), bilinear, periodic.
    pub fn advect(&self, q: &Grid<f64>, vx: &Grid<f64>, vy: &Grid<f64>, dt: f64) -> Grid<f64> {
        let (rows, cols) = (self.rows as f64, self.cols as f64);
        Grid::from_fn(self.rows, self.cols, |r, c| {
            let x = (c as f64 - dt * vx[(r, c)]).rem_euclid(cols);
            let y = (r as f64 - dt * vy[(r, c)]).rem_euclid(rows);
            let (x0, y0) = (x.floor(), y.floor());
            let (tx, ty) = (x - x0, y - y0);
            let c0 = (x0 as usize) % self.cols;
            let r0 = (y0 as usize) % self.rows;
            let c1 = (c0 + 1) % self.cols;
            let r1 = (r0 + 1) % self.rows;
            let top = q[(r0, c0)] * (1.0 - tx) + q[(r0, c1)] * tx;
            let bot = q[(r1, c0)] * (1.0 - tx) + q[(r1, c1)] * tx;
            top * (1.0 - ty) + bot * ty
        })
    }

    /// One full step: force, advect, diffuse, project.
    pub fn step(&self, vx: &mut Grid<f64>, vy: &mut Grid<f64>, force: (&Grid<f64>, &Grid<f64>), params: &FluidParams) {
        for (v, f) in vx.as_mut_slice().iter_mut().zip(force.0.iter()) {
            *v += params.dt * f;
        }
        for (v, f) in vy.as_mut_slice().iter_mut().zip(force.1.iter()) {
            *v += params.dt * f;
        }
        let ax = self.advect(vx, vx, vy, params.dt);
        let ay = self.advect(vy, vx, vy, params.dt);
        *vx = ax;
        *vy = ay;
        self.diffuse(vx, params.viscosity, params.dt);
        self.diffuse(vy, params.viscosity, params.dt);
        self.project(vx, vy);
    }
}

/// Seeded smooth body force: a handful of random periodic sinusoids.
fn body_force(seed: u64, rows: usize, cols: usize, params: &FluidParams) -> (Grid<f64>, Grid<f64>) {
    use rand::Rng;
    let mut rng = seed::rng(seed);
    let tau = std::f64::consts::TAU;
    let modes: Vec<_> = (0..params.forcing_modes)
        .map(|_| {
            let kx = rng.random_range(1..=3) as f64;
            let ky = rng.random_range(1..=3) as f64;
            let phase = rng.random_range(0.0..tau);
            let ax = rng.random_range(-1.0..1.0);
            let ay = rng.random_range(-1.0..1.0);
            (kx, ky, phase, ax, ay)
        })
        .collect();
    let scale = if modes.is_empty() { 0.0 } else { params.forcing / modes.len() as f64 };
    let eval = |r: usize, c: usize, pick_x: bool| {
        modes
            .iter()
            .map(|&(kx, ky, phase, ax, ay)| {
                let s = (tau * (kx * c as f64 / cols as f64 + ky * r as f64 / rows as f64) + phase).sin();
                s * if pick_x { ax } else { ay }
            })
            .sum::<f64>()
            * scale
    };
    (
        Grid::from_fn(rows, cols, |r, c| eval(r, c, true)),
        Grid::from_fn(rows, cols, |r, c| eval(r, c, false)),
    )
}

/// Runs the fluid solver for `steps` frames seeded by `seed`.
pub fn generate_wind_fluid(
    seed: u64,
    rows: usize,
    cols: usize,
    steps: usize,
    params: &FluidParams,
) -> Result<WindField, WindError> {
    if steps == 0 {
        return Err(WindError::NoSteps);
    }
    if !(params.viscosity.is_finite() && params.viscosity > 0.0) {
        return Err(WindError::NonPositiveViscosity(params.viscosity));
    }
    if !(params.dt > 0.0 && params.initial_speed >= 0.0 && params.forcing.is_finite()) {
        return Err(WindError::Invalid("fluid wind needs dt > 0 and initial_speed >= 0"));
    }
    if rows < 2 || cols < 2 {
        return Err(WindError::Invalid("fluid wind needs at least 2x2 cells"));
    }
    let solver = FluidSolver::new(rows, cols);
    let theta = params.initial_direction.to_radians();
    // grid axes: +x east, +y south
    let mut vx = Grid::filled(rows, cols, params.initial_speed * theta.sin());
    let mut vy = Grid::filled(rows, cols, -params.initial_speed * theta.cos());
    let (fx, fy) = body_force(seed::derive(seed, seed::WIND), rows, cols, params);

    let mut frames = Vec::with_capacity(steps);
    for _ in 0..steps {
        solver.step(&mut vx, &mut vy, (&fx, &fy), params);
        let samples = Grid::from_fn(rows, cols, |r, c| polar_from_components(vx[(r, c)], -vy[(r, c)]));
        frames.push(WindFrame {
            speed: samples.map(|s| s.speed),
            direction: samples.map(|s| s.direction),
        });
    }
    WindField::from_frames(WindMode::Fluid, frames)
}
