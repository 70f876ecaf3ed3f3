//! The grid kernel against a plain scalar transcription of the Rothermel
//! single-class model, written out from the formulas without reusing any
//! library code.

use std::sync::Arc;

use emberline_core::firespread::{rothermel_ros, FireConfig, FireEngine, Ignition};
use emberline_core::grid::Grid;
use emberline_core::terrain::{FuelCatalog, FuelModel, LayerStack, FEET_PER_METER};
use emberline_core::wind::WindField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rate of spread in ft/min. `u` is midflame wind in mph; `tan_phi` is rise/run.
fn oracle_ros(w0: f64, sigma: f64, delta: f64, mx: f64, m: f64, u: f64, tan_phi: f64) -> f64 {
    let h = 8000.0;
    let s_t = 0.0555;
    let s_e: f64 = 0.010;
    let rho_p = 32.0;

    if w0 <= 0.0 || m >= mx {
        return 0.0;
    }
    let rho_b = w0 / delta;
    let beta = rho_b / rho_p;
    let beta_op = 3.348 / sigma.powf(0.8189);
    let a = 133.0 / sigma.powf(0.7913);
    let gamma_max = sigma.powf(1.5) / (495.0 + 0.0594 * sigma.powf(1.5));
    let ratio = beta / beta_op;
    let gamma = gamma_max * ratio.powf(a) * (a * (1.0 - ratio)).exp();

    let wn = w0 * (1.0 - s_t);
    let r = m / mx;
    let eta_m = 1.0 - 2.59 * r + 5.11 * r.powi(2) - 3.52 * r.powi(3);
    let eta_s = f64::min(1.0, 0.174 * s_e.powf(-0.19));
    let i_r = gamma * wn * h * eta_m * eta_s;

    let xi = ((0.792 + 0.681 * sigma.sqrt()) * (beta + 0.1)).exp() / (192.0 + 0.2595 * sigma);

    let c = 7.47 * (-0.133 * sigma.powf(0.55)).exp();
    let b = 0.02526 * sigma.powf(0.54);
    let e = 0.715 * (-0.000359 * sigma).exp();
    let u_ftmin = u * 88.0;
    let phi_w = c * u_ftmin.powf(b) * ratio.powf(-e);
    let phi_s = 5.275 * beta.powf(-0.3) * tan_phi * tan_phi;

    let epsilon = (-138.0 / sigma).exp();
    let q_ig = 250.0 + 1116.0 * m;

    i_r * xi * (1.0 + phi_w + phi_s) / (rho_b * epsilon * q_ig)
}

fn oracle(f: &FuelModel, m: f64, u: f64, s: f64) -> f64 {
    oracle_ros(f.w0, f.sigma, f.delta, f.mx, m, u, s)
}

/// ROS the 3x3 grid kernel uses for spread from the center cell eastward,
/// with eastward wind `u` and terrain rising eastward at `slope`.
fn kernel_ros(fuel: u16, m: f64, u: f64, slope: f64) -> f64 {
    let cell = 30.0;
    let run_ft = cell * FEET_PER_METER;
    let stack = LayerStack::uniform(3, 3, fuel, cell)
        .unwrap()
        .with_elevation(Grid::from_fn(3, 3, |_, c| slope * run_ft * c as f64))
        .unwrap();
    let fire = FireConfig {
        dead_fuel_moisture: m,
        ignition: Ignition::at(1, 1),
        ..Default::default()
    };
    let engine = FireEngine::new(Arc::new(stack), WindField::constant(u, 90.0).unwrap(), &fire).unwrap();
    engine.directional_ros((1, 1), 2, 0).unwrap()
}

#[test]
fn kernel_matches_scalar_oracle_on_random_sweep() {
    let cat = FuelCatalog::standard();
    let models: Vec<&FuelModel> = cat.models().filter(|f| f.is_burnable()).collect();
    assert_eq!(models.len(), 13);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = models[rng.random_range(0..models.len())];
        let m = rng.random_range(0.0..f.mx);
        let u = rng.random_range(0.0..=20.0);
        let s = rng.random_range(0.0..=1.0);
        let want = oracle(f, m, u, s);
        let got = kernel_ros(f.id, m, u, s);
        let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
        worst = worst.max(rel);
        assert!(rel <= 1e-6, "model {} m={m} u={u} s={s}: kernel {got}, oracle {want}", f.id);
        // the checked scalar entry point agrees too
        let scalar = rothermel_ros(f, m, u, s).unwrap();
        assert!(((scalar - want) / want).abs() <= 1e-12 || want == 0.0);
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert!(worst <= 1e-6);
}

#[test]
fn extinction_and_no_fuel_are_exact_zeros() {
    let cat = FuelCatalog::standard();
    for f in cat.models().filter(|f| f.is_burnable()) {
        for m in [f.mx, f.mx + 1e-9, f.mx * 1.5, 0.99] {
            for (u, s) in [(0.0, 0.0), (20.0, 1.0), (7.0, 0.3)] {
                assert_eq!(rothermel_ros(f, m, u, s).unwrap(), 0.0, "model {} at m = {m}", f.id);
            }
        }
        let empty = FuelModel { w0: 0.0, ..f.clone() };
        for (m, u, s) in [(0.0, 0.0, 0.0), (0.05, 20.0, 1.0)] {
            assert_eq!(rothermel_ros(&empty, m, u, s).unwrap(), 0.0, "model {} without load", f.id);
        }
    }
    let sentinel = cat.lookup(0).unwrap();
    assert_eq!(rothermel_ros(sentinel, 0.0, 20.0, 1.0).unwrap(), 0.0);
}

#[test]
fn short_grass_reference_values() {
    // independent desk calculation for model 1 at 3% moisture
    let f = FuelCatalog::standard().lookup(1).unwrap().clone();
    let cases = [(0.03, 0.0, 5.85), (0.03, 5.0, 131.3), (0.06, 5.0, 103.28)];
    for (m, u, want) in cases {
        let got = rothermel_ros(&f, m, u, 0.0).unwrap();
        assert!((got - want).abs() / want < 2e-3, "m={m} u={u}: {got} vs {want}");
    }
}
