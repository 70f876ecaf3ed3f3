//! Surface fuel models and the standard catalog.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::TerrainError;

/// Id of the non-burnable sentinel present in every catalog.
pub const NON_BURNABLE: u16 = 0;

/// tons/acre to lb/ft^2.
const TONS_PER_ACRE: f64 = 2000.0 / 43_560.0;

/// Single-class Rothermel fuel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelModel {
    pub id: u16,
    pub name: String,
    /// Oven-dry fuel load, lb/ft^2.
    pub w0: f64,
    /// Surface-area-to-volume ratio, ft^2/ft^3.
    pub sigma: f64,
    /// Fuel bed depth, ft.
    pub delta: f64,
    /// Dead fuel moisture of extinction, fraction.
    pub mx: f64,
}

impl FuelModel {
    pub fn non_burnable(id: u16) -> Self {
        Self {
            id,
            name: "non-burnable".into(),
            w0: 0.0,
            sigma: 1.0,
            delta: 1.0,
            mx: 0.5,
        }
    }

    pub fn is_burnable(&self) -> bool {
        self.w0 > 0.0
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        let ok = self.w0.is_finite()
            && self.w0 >= 0.0
            && self.sigma.is_finite()
            && self.sigma > 0.0
            && self.delta.is_finite()
            && self.delta > 0.0
            && self.mx > 0.0
            && self.mx < 1.0;
        if ok {
            Ok(())
        } else {
            Err(TerrainError::InvalidFuel {
                id: self.id,
                reason: format!(
                    "need w0 >= 0, sigma > 0, delta > 0, 0 < mx < 1; got w0={}, sigma={}, delta={}, mx={}",
                    self.w0, self.sigma, self.delta, self.mx
                ),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelCatalog {
    entries: BTreeMap<u16, FuelModel>,
}

impl FuelCatalog {
    /// Builds a catalog from user entries. The non-burnable sentinel is added
    /// under id 0 unless the caller supplies its own non-burnable id 0.
    pub fn new(models: impl IntoIterator<Item = FuelModel>) -> Result<Self, TerrainError> {
        let mut entries = BTreeMap::new();
        for m in models {
            m.validate()?;
            let id = m.id;
            if entries.insert(id, m).is_some() {
                return Err(TerrainError::DuplicateFuel(id));
            }
        }
        match entries.get(&NON_BURNABLE) {
            Some(m) if m.is_burnable() => {
                return Err(TerrainError::InvalidFuel {
                    id: NON_BURNABLE,
                    reason: "id 0 is reserved for a non-burnable fuel".into(),
                })
            }
            Some(_) => {}
            None => {
                entries.insert(NON_BURNABLE, FuelModel::non_burnable(NON_BURNABLE));
            }
        }
        Ok(Self { entries })
    }

    /// The 13 Anderson (1982) behavior fuel models under ids 1..=13, reduced to
    /// a single size class: `w0` is the 1-h dead load, `sigma` the 1-h
    /// surface-area-to-volume ratio.
    pub fn standard() -> Self {
        // (id, name, 1-h load t/ac, 1-h SAV, depth ft, Mx)
        const TABLE: [(u16, &str, f64, f64, f64, f64); 13] = [
            (1, "short grass (1 ft)", 0.74, 3500.0, 1.0, 0.12),
            (2, "timber (grass and understory)", 2.00, 3000.0, 1.0, 0.15),
            (3, "tall grass (2.5 ft)", 3.00, 1500.0, 2.5, 0.25),
            (4, "chaparral (6 ft)", 5.00, 2000.0, 6.0, 0.20),
            (5, "brush (2 ft)", 1.00, 2000.0, 2.0, 0.20),
            (6, "dormant brush, hardwood slash", 1.50, 1750.0, 2.5, 0.25),
            (7, "southern rough", 1.13, 1750.0, 2.5, 0.40),
            (8, "closed timber litter", 1.50, 2000.0, 0.2, 0.30),
            (9, "hardwood litter", 2.92, 2500.0, 0.2, 0.25),
            (10, "timber (litter and understory)", 3.01, 2000.0, 1.0, 0.25),
            (11, "light logging slash", 1.50, 1500.0, 1.0, 0.15),
            (12, "medium logging slash", 4.01, 1500.0, 2.3, 0.20),
            (13, "heavy logging slash", 7.01, 1500.0, 3.0, 0.25),
        ];
        let models = TABLE.iter().map(|&(id, name, load, sigma, delta, mx)| FuelModel {
            id,
            name: name.to_string(),
            w0: load * TONS_PER_ACRE,
            sigma,
            delta,
            mx,
        });
        Self::new(models).expect("standard catalog is valid")
    }

    pub fn lookup(&self, id: u16) -> Result<&FuelModel, TerrainError> {
        self.entries.get(&id).ok_or(TerrainError::UnknownFuel(i64::from(id)))
    }

    pub fn contains(&self, id: u16) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.entries.keys().copied()
    }

    pub fn models(&self) -> impl Iterator<Item = &FuelModel> {
        self.entries.values()
    }

    pub fn max_id(&self) -> u16 {
        self.entries.keys().next_back().copied().unwrap_or(0)
    }
}

impl Default for FuelCatalog {
    fn default() -> Self {
        Self::standard()
    }
}
