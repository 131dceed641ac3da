//! Run configuration: one JSON document for every verb.

use std::path::{Path, PathBuf};

use probshape::data::SynthConfig;
use probshape::inference::DEFAULT_LEVELS;
use probshape::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub plot: PlotConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    /// Draw ellipses for every `stride`-th vertex.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// SVG units per image pixel.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

fn default_stride() -> usize {
    2
}

fn default_scale() -> f64 {
    8.0
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            stride: default_stride(),
            scale: default_scale(),
        }
    }
}

/// Parsed config plus the raw bytes it came from (for provenance).
pub struct LoadedConfig {
    pub config: RunConfig,
    pub bytes: Option<Vec<u8>>,
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("config error at `{path}`: {}", e.inner()))
    })
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let Some(path) = path else {
        return Ok(LoadedConfig {
            config: RunConfig::default(),
            bytes: None,
        });
    };
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Config(format!("config {} is not UTF-8", path.display())))?;
    let config = parse(text)?;
    if let Some(s) = &config.synth {
        s.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
    }
    if let Some(t) = &config.train {
        t.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
    }
    for &l in &config.plot.levels {
        if !(l > 0.0 && l < 1.0) {
            return Err(CliError::Config(format!("plot.levels: {l} is not in (0, 1)")));
        }
    }
    Ok(LoadedConfig {
        config,
        bytes: Some(bytes),
    })
}
