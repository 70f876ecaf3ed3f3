//! Layered TOML run configuration.
//!
//! A run is described by one or more TOML files applied in order; later
//! files override earlier ones key by key (tables merge recursively, every
//! other value is replaced). A file may list `include = ["other.toml"]`,
//! resolved relative to itself and applied before its own keys. Unknown
//! keys are rejected, and every error names the offending key path.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::env::{EpisodeConfig, Scenario};
use crate::firespread::FireConfig;
use crate::seed;
use crate::strategy::{CemParams, PolicySpec};
use crate::terrain::{generate_procedural, load_bundle, FuelCatalog, LayerStack, Origin, ProceduralParams};
use crate::wind::{generate_wind_fluid, generate_wind_noise, FluidParams, NoiseWindParams, WindField};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: include cycle")]
    IncludeCycle { path: PathBuf },
    /// `key` is a dotted path such as `environment.agent_speed`.
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl ToString) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

fn default_cell_size() -> f64 {
    30.0
}

/// Where the fuel and elevation layers come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSection {
    Procedural {
        rows: usize,
        cols: usize,
        /// Cell edge, meters.
        #[serde(default = "default_cell_size")]
        cell_size: f64,
        /// [lat, lon] of the north-west corner.
        #[serde(default)]
        origin: Option<[f64; 2]>,
        #[serde(default)]
        params: ProceduralParams,
    },
    /// A bundle directory with `fuel.grid`, `elevation.grid` and `meta.toml`.
    Files { dir: PathBuf },
}

fn default_wind_steps() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindSection {
    Constant {
        /// mph
        speed: f64,
        /// Bearing the air travels toward, degrees clockwise from north.
        direction: f64,
    },
    Generated {
        #[serde(default = "default_wind_steps")]
        steps: usize,
        #[serde(default)]
        params: NoiseWindParams,
    },
    Fluid {
        #[serde(default = "default_wind_steps")]
        steps: usize,
        #[serde(default)]
        params: FluidParams,
    },
}

impl Default for WindSection {
    fn default() -> Self {
        WindSection::Constant {
            speed: 0.0,
            direction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub terrain: TerrainSection,
    #[serde(default)]
    pub wind: WindSection,
    #[serde(default)]
    pub fire: FireConfig,
}

fn default_episodes() -> usize {
    8
}

fn default_budget() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default = "default_policy")]
    pub policy: PolicySpec,
    /// Episodes for `evaluate`.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Fireline cells available to `optimize`.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub cem: CemParams,
}

fn default_policy() -> PolicySpec {
    PolicySpec::Noop
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            episodes: default_episodes(),
            budget: default_budget(),
            cem: CemParams::default(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write a status grid every this many fire steps; 0 disables frames.
    #[serde(default)]
    pub frames_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            frames_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; terrain, wind, ignition, policy and optimizer seeds derive from it.
    #[serde(default)]
    pub seed: u64,
    pub scenario: ScenarioSection,
    pub environment: EpisodeConfig,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Recursively merges `over` into `base`.
pub fn deep_merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_table(path: &Path) -> Result<Table, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse::<Table>().map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Makes a relative `scenario.terrain.dir` relative to the file naming it.
fn anchor_paths(table: &mut Table, base: &Path) {
    let dir = table
        .get_mut("scenario")
        .and_then(Value::as_table_mut)
        .and_then(|s| s.get_mut("terrain"))
        .and_then(Value::as_table_mut)
        .and_then(|t| t.get_mut("dir"));
    if let Some(Value::String(s)) = dir {
        let p = Path::new(s.as_str());
        if p.is_relative() {
            *s = base.join(p).to_string_lossy().into_owned();
        }
    }
}

/// One file with its includes applied.
pub fn load_layer(path: &Path) -> Result<Table, ConfigError> {
    load_layer_inner(path, &mut BTreeSet::new())
}

fn load_layer_inner(path: &Path, stack: &mut BTreeSet<PathBuf>) -> Result<Table, ConfigError> {
    let canonical = fs::canonicalize(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if !stack.insert(canonical.clone()) {
        return Err(ConfigError::IncludeCycle { path: path.to_path_buf() });
    }
    let base = canonical.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut own = read_table(path)?;
    let includes = match own.remove("include") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => Ok(s),
                other => Err(ConfigError::invalid("include", format!("expected a path string, found {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(other) => return Err(ConfigError::invalid("include", format!("expected an array of paths, found {other}"))),
    };
    let mut merged = Table::new();
    for inc in includes {
        deep_merge(&mut merged, load_layer_inner(&base.join(inc), stack)?);
    }
    anchor_paths(&mut own, &base);
    deep_merge(&mut merged, own);
    stack.remove(&canonical);
    Ok(merged)
}

/// Loads and merges `paths` in order, then validates the result.
pub fn load_config(paths: &[PathBuf]) -> Result<RunConfig, ConfigError> {
    let mut merged = Table::new();
    for p in paths {
        deep_merge(&mut merged, load_layer(p)?);
    }
    RunConfig::from_table(merged)
}

fn key_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." {
        String::new()
    } else {
        s
    }
}

impl RunConfig {
    pub fn from_table(table: Table) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_path_to_error::deserialize(Value::Table(table)).map_err(|e| {
            let key = key_path(e.path());
            ConfigError::Invalid {
                key: if key.is_empty() { "<root>".into() } else { key },
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table = text.parse::<Table>().map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        Self::from_table(table)
    }

    /// JSON form of a config, as sent to the session service.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = key_path(e.path());
            ConfigError::Invalid {
                key: if key.is_empty() { "<root>".into() } else { key },
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Checks what the types cannot. Dimension-dependent checks on file
    /// terrain happen when the scenario is built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario
            .fire
            .validate()
            .map_err(|e| ConfigError::invalid("scenario.fire", e))?;
        if let TerrainSection::Procedural { rows, cols, cell_size, .. } = &self.scenario.terrain {
            if *rows < 2 || *cols < 2 {
                return Err(ConfigError::invalid("scenario.terrain", "procedural terrain needs rows, cols >= 2"));
            }
            if !(cell_size.is_finite() && *cell_size > 0.0) {
                return Err(ConfigError::invalid("scenario.terrain.cell_size", "must be positive"));
            }
            self.check_dims((*rows, *cols))?;
        }
        match &self.scenario.wind {
            WindSection::Constant { speed, direction } => {
                if !(speed.is_finite() && *speed >= 0.0) {
                    return Err(ConfigError::invalid("scenario.wind.speed", "must be finite and >= 0"));
                }
                if !direction.is_finite() {
                    return Err(ConfigError::invalid("scenario.wind.direction", "must be finite"));
                }
            }
            WindSection::Generated { steps, .. } | WindSection::Fluid { steps, .. } => {
                if *steps == 0 {
                    return Err(ConfigError::invalid("scenario.wind.steps", "must be >= 1"));
                }
            }
        }
        if self.strategy.episodes == 0 {
            return Err(ConfigError::invalid("strategy.episodes", "must be >= 1"));
        }
        if self.strategy.budget == 0 {
            return Err(ConfigError::invalid("strategy.budget", "must be >= 1"));
        }
        self.strategy
            .cem
            .validate()
            .map_err(|e| ConfigError::invalid("strategy.cem", e))?;
        Ok(())
    }

    fn check_dims(&self, dims: (usize, usize)) -> Result<(), ConfigError> {
        let env = &self.environment;
        env.validate(dims).map_err(|e| {
            let key = if env.agent_start[0] >= dims.0 || env.agent_start[1] >= dims.1 {
                "environment.agent_start"
            } else {
                "environment"
            };
            ConfigError::invalid(key, e)
        })?;
        if let crate::firespread::Ignition::Cell([r, c]) = self.scenario.fire.ignition {
            if r >= dims.0 || c >= dims.1 {
                return Err(ConfigError::invalid(
                    "scenario.fire.ignition",
                    format!("cell [{r}, {c}] outside the {}x{} grid", dims.0, dims.1),
                ));
            }
        }
        Ok(())
    }

    pub fn build_stack(&self) -> Result<LayerStack, ConfigError> {
        let catalog = Arc::new(FuelCatalog::standard());
        let stack = match &self.scenario.terrain {
            TerrainSection::Procedural {
                rows,
                cols,
                cell_size,
                origin,
                params,
            } => generate_procedural(
                seed::derive(self.seed, seed::TERRAIN),
                *rows,
                *cols,
                *cell_size,
                origin.map(|[lat, lon]| Origin { lat, lon }),
                params,
                catalog,
            )
            .map_err(|e| ConfigError::invalid("scenario.terrain", e))?,
            TerrainSection::Files { dir } => {
                load_bundle(dir, catalog).map_err(|e| ConfigError::invalid("scenario.terrain.dir", e))?
            }
        };
        self.check_dims(stack.dims())?;
        Ok(stack)
    }

    pub fn build_wind(&self, (rows, cols): (usize, usize)) -> Result<WindField, ConfigError> {
        let err = |e| ConfigError::invalid("scenario.wind", e);
        match &self.scenario.wind {
            WindSection::Constant { speed, direction } => WindField::constant(*speed, *direction).map_err(err),
            WindSection::Generated { steps, params } => generate_wind_noise(self.seed, rows, cols, *steps, params).map_err(err),
            WindSection::Fluid { steps, params } => generate_wind_fluid(self.seed, rows, cols, *steps, params).map_err(err),
        }
    }

    pub fn build_scenario(&self) -> Result<Scenario, ConfigError> {
        let stack = self.build_stack()?;
        let wind = self.build_wind(stack.dims())?;
        Scenario::new(Arc::new(stack), wind, &self.scenario.fire).map_err(|e| ConfigError::invalid("scenario", e))
    }

    /// Episode settings carrying the run's root seed.
    pub fn episode_config(&self) -> EpisodeConfig {
        self.environment.clone().with_seed(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3

[scenario.terrain]
source = "procedural"
rows = 16
cols = 16

[scenario.wind]
mode = "constant"
speed = 5.0
direction = 90.0

[environment]
agent_start = [8, 0]
agent_speed = 2
"#;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn override_replaces_leaf_keys() {
        let d = tempfile::tempdir().unwrap();
        let base = write(d.path(), "base.toml", BASE);
        let over = write(d.path(), "over.toml", "[environment]\nagent_speed = 4\n");
        let cfg = load_config(&[base.clone(), over]).unwrap();
        assert_eq!(cfg.environment.agent_speed, 4);
        assert_eq!(cfg.environment.agent_start, [8, 0]);
        assert_eq!(load_config(&[base]).unwrap().environment.agent_speed, 2);
    }

    #[test]
    fn unknown_key_is_named() {
        let d = tempfile::tempdir().unwrap();
        let base = write(d.path(), "base.toml", BASE);
        let over = write(d.path(), "typo.toml", "[environment]\nagnet_speed = 4\n");
        let err = load_config(&[base, over]).unwrap_err().to_string();
        assert!(err.contains("agnet_speed"), "{err}");
        assert!(err.starts_with("environment"), "{err}");
    }

    #[test]
    fn includes_apply_before_own_keys() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "base.toml", BASE);
        let child = write(d.path(), "child.toml", "include = [\"base.toml\"]\nseed = 9\n");
        let cfg = load_config(&[child]).unwrap();
        assert_eq!((cfg.seed, cfg.environment.agent_speed), (9, 2));
    }

    #[test]
    fn include_cycles_are_reported() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a.toml", "include = [\"b.toml\"]\n");
        let b = write(d.path(), "b.toml", "include = [\"a.toml\"]\n");
        assert!(matches!(load_config(&[b]), Err(ConfigError::IncludeCycle { .. })));
    }

    #[test]
    fn round_trip_through_toml() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn semantic_errors_carry_key_paths() {
        let bad_start = BASE.replace("agent_start = [8, 0]", "agent_start = [8, 40]");
        let err = RunConfig::from_toml_str(&bad_start).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "environment.agent_start"));

        let bad_speed = BASE.replace("agent_speed = 2", "agent_speed = 0");
        assert!(RunConfig::from_toml_str(&bad_speed).is_err());

        let bad_kind = format!("{BASE}\n[strategy.policy]\nkind = \"teleport\"\n");
        let err = RunConfig::from_toml_str(&bad_kind).unwrap_err().to_string();
        assert!(err.starts_with("strategy.policy"), "{err}");
    }

    #[test]
    fn json_errors_carry_key_paths() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&json).unwrap(), cfg);
        let bad = json.replace("\"agent_speed\":2", "\"agent_speed\":\"fast\"");
        let err = RunConfig::from_json_str(&bad).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "environment.agent_speed"), "{err}");
    }

    #[test]
    fn builds_scenario_from_seed() {
        let cfg = RunConfig::from_toml_str(BASE).unwrap();
        let a = cfg.build_scenario().unwrap();
        let b = cfg.build_scenario().unwrap();
        assert_eq!(a.stack(), b.stack());
        assert_eq!(a.dims(), (16, 16));
        assert_eq!(cfg.episode_config().seed, 3);
    }
}
