//! Rothermel (1972) surface rate of spread for a single fuel size class.
//!
//! Inputs stay in the model's customary units: loads lb/ft^2, SAV ft^2/ft^3,
//! depth ft, wind mph (converted to ft/min internally), slope as rise/run.
//! The output is ft/min.

use super::FireError;
use crate::terrain::FuelModel;

/// Low heat content, BTU/lb.
pub const HEAT_CONTENT: f64 = 8000.0;
/// Total mineral content, fraction.
pub const TOTAL_MINERAL: f64 = 0.0555;
/// Effective (silica-free) mineral content, fraction.
pub const EFFECTIVE_MINERAL: f64 = 0.010;
/// Oven-dry particle density, lb/ft^3.
pub const PARTICLE_DENSITY: f64 = 32.0;
/// ft/min per mph.
pub const FT_PER_MIN_PER_MPH: f64 = 88.0;

/// Moisture-independent terms of the Rothermel chain for one fuel model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelCoefficients {
    burnable: bool,
    mx: f64,
    /// reaction intensity without the moisture damping term, BTU/ft^2/min
    dry_reaction_intensity: f64,
    flux_ratio: f64,
    bulk_density: f64,
    heating_number: f64,
    wind_c: f64,
    wind_b: f64,
    /// (beta / beta_op)^-E
    wind_packing: f64,
    /// 5.275 * beta^-0.3
    slope_k: f64,
}

impl FuelCoefficients {
    pub fn new(fuel: &FuelModel) -> Self {
        let sigma = fuel.sigma;
        let burnable = fuel.w0 > 0.0;
        let bulk_density = fuel.w0 / fuel.delta;
        let beta = bulk_density / PARTICLE_DENSITY;
        let beta_op = 3.348 * sigma.powf(-0.8189);
        let rel = beta / beta_op;

        let sigma15 = sigma.powf(1.5);
        let gamma_max = sigma15 / (495.0 + 0.0594 * sigma15);
        let a = 133.0 * sigma.powf(-0.7913);
        let gamma = if burnable {
            gamma_max * rel.powf(a) * (a * (1.0 - rel)).exp()
        } else {
            0.0
        };
        let net_load = fuel.w0 * (1.0 - TOTAL_MINERAL);
        let eta_s = (0.174 * EFFECTIVE_MINERAL.powf(-0.19)).min(1.0);

        let e = 0.715 * (-3.59e-4 * sigma).exp();
        Self {
            burnable,
            mx: fuel.mx,
            dry_reaction_intensity: gamma * net_load * HEAT_CONTENT * eta_s,
            flux_ratio: ((0.792 + 0.681 * sigma.sqrt()) * (beta + 0.1)).exp() / (192.0 + 0.2595 * sigma),
            bulk_density,
            heating_number: (-138.0 / sigma).exp(),
            wind_c: 7.47 * (-0.133 * sigma.powf(0.55)).exp(),
            wind_b: 0.02526 * sigma.powf(0.54),
            wind_packing: if burnable { rel.powf(-e) } else { 0.0 },
            slope_k: if burnable { 5.275 * beta.powf(-0.3) } else { 0.0 },
        }
    }

    pub fn is_burnable(&self) -> bool {
        self.burnable
    }

    /// Rate of spread in ft/min. Inputs are assumed valid (non-negative).
    #[inline]
    pub fn ros(&self, moisture: f64, wind_mph: f64, slope: f64) -> f64 {
        if !self.burnable || moisture >= self.mx {
            return 0.0;
        }
        let rm = moisture / self.mx;
        let eta_m = (1.0 - 2.59 * rm + 5.11 * rm * rm - 3.52 * rm * rm * rm).max(0.0);
        let reaction = self.dry_reaction_intensity * eta_m;
        let phi_w = if wind_mph > 0.0 {
            self.wind_c * (wind_mph * FT_PER_MIN_PER_MPH).powf(self.wind_b) * self.wind_packing
        } else {
            0.0
        };
        let phi_s = self.slope_k * slope * slope;
        let heat_sink = self.bulk_density * self.heating_number * (250.0 + 1116.0 * moisture);
        (reaction * self.flux_ratio * (1.0 + phi_w + phi_s) / heat_sink).max(0.0)
    }
}

/// Checked rate of spread, ft/min.
pub fn rothermel_ros(fuel: &FuelModel, moisture: f64, midflame_wind: f64, slope: f64) -> Result<f64, FireError> {
    let check = |name: &'static str, v: f64| {
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(FireError::InvalidInput(format!("{name} must be finite and >= 0, got {v}")))
        }
    };
    check("moisture", moisture)?;
    check("midflame wind", midflame_wind)?;
    check("slope", slope)?;
    fuel.validate()
        .map_err(|e| FireError::InvalidInput(e.to_string()))?;
    Ok(FuelCoefficients::new(fuel).ros(moisture, midflame_wind, slope))
}
