//! Run configuration: TOML file plus command-line overrides.
//!
//! ```toml
//! [[material]]
//! name = "CRO-twig"
//! path = "cro_twig.csv"
//!
//! [columns]
//! position = "x"          # or east = "east", north = "north"
//!
//! [model]
//! tweedie_power = 1.5
//! lambda_min = 1e-6
//! lambda_max = 1e4
//! lambda_count = 40
//!
//! [grid]
//! points = 3000
//! epsilon = 1e-3
//!
//! [output]
//! top_k = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::{DEFAULT_EPSILON, DEFAULT_GRID_POINTS};
use crate::gam::LambdaGrid;
use crate::ingest::ColumnRoles;
use crate::synth::{Anomaly, SyntheticSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("config error: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialInput {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_power")]
    pub tweedie_power: f64,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
}

fn default_power() -> f64 {
    1.5
}
fn default_lambda_min() -> f64 {
    LambdaGrid::default().min
}
fn default_lambda_max() -> f64 {
    LambdaGrid::default().max
}
fn default_lambda_count() -> usize {
    LambdaGrid::default().count
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            tweedie_power: default_power(),
            lambda_min: default_lambda_min(),
            lambda_max: default_lambda_max(),
            lambda_count: default_lambda_count(),
        }
    }
}

impl ModelConfig {
    pub fn lambda_grid(&self) -> Vec<f64> {
        LambdaGrid {
            min: self.lambda_min,
            max: self.lambda_max,
            count: self.lambda_count,
        }
        .values()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_grid_points")]
    pub points: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: default_grid_points(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_top_k() -> usize {
    10
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            top_k: default_top_k(),
        }
    }
}

/// Synthetic-data section; anomalies name elements by 1-based index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub samples: usize,
    pub elements: usize,
    #[serde(default)]
    pub anomalies: Vec<SynthAnomalyConfig>,
    #[serde(default = "default_baseline")]
    pub baseline: f64,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_baseline() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthAnomalyConfig {
    /// 1-based element index.
    pub element: usize,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl SynthConfig {
    pub fn to_spec(&self, seed_override: Option<u64>) -> Result<SyntheticSpec, ConfigError> {
        let anomalies = self
            .anomalies
            .iter()
            .map(|a| {
                if a.element == 0 || a.element > self.elements {
                    return Err(ConfigError::Invalid(format!(
                        "synth anomaly element index {} must be in 1..={}",
                        a.element, self.elements
                    )));
                }
                Ok(Anomaly {
                    element: a.element - 1,
                    center: a.center,
                    width: a.width,
                    amplitude: a.amplitude,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SyntheticSpec {
            samples: self.samples,
            elements: self.elements,
            anomalies,
            baselines: vec![self.baseline],
            noise_sd: self.noise_sd,
            seed: seed_override.unwrap_or(self.seed),
        })
    }
}

/// Everything a run needs. Serialized form doubles as the provenance record
/// hashed into output headers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, rename = "material")]
    pub materials: Vec<MaterialInput>,
    #[serde(default)]
    pub columns: ColumnRoles,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    /// Optional file of known anomaly positions (one normalized position in
    /// [0, 1] per line) used by `detect` for overlap reports.
    #[serde(default)]
    pub known_anomalies: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            materials: Vec::new(),
            columns: ColumnRoles::default(),
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            output: OutputConfig::default(),
            synth: None,
            known_anomalies: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        // Input paths are relative to the config file.
        if let Some(dir) = path.parent() {
            for m in &mut cfg.materials {
                if m.path.is_relative() {
                    m.path = dir.join(&m.path);
                }
            }
            if let Some(known) = &mut cfg.known_anomalies {
                if known.is_relative() {
                    *known = dir.join(&known);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.model.tweedie_power > 1.0 && self.model.tweedie_power < 2.0) {
            return Err(ConfigError::Invalid(format!(
                "tweedie_power must lie in (1, 2), got {}",
                self.model.tweedie_power
            )));
        }
        if !(self.model.lambda_min > 0.0) || self.model.lambda_max < self.model.lambda_min {
            return Err(ConfigError::Invalid(
                "lambda grid bounds must satisfy 0 < lambda_min <= lambda_max".into(),
            ));
        }
        if self.model.lambda_count == 0 {
            return Err(ConfigError::Invalid("lambda_count must be positive".into()));
        }
        if self.grid.points < 100 {
            return Err(ConfigError::Invalid(format!(
                "grid points must be at least 100, got {}",
                self.grid.points
            )));
        }
        if !(self.grid.epsilon > 0.0 && self.grid.epsilon < 0.1) {
            return Err(ConfigError::Invalid(format!(
                "grid epsilon must lie in (0, 0.1), got {}",
                self.grid.epsilon
            )));
        }
        if self.output.top_k == 0 {
            return Err(ConfigError::Invalid("top_k must be positive".into()));
        }
        Ok(())
    }

    /// Short FNV-1a digest of the serialized configuration, stamped into every
    /// output table so artifacts from different runs can be told apart.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
