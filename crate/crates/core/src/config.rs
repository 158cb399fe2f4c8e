//! Run configuration, named presets and TOML round-tripping.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{AblationGrid, ExperimentProtocol};
use crate::nn::ModelConfig;
use crate::pipeline::DataConfig;
use crate::train::TrainConfig;
use crate::windowing::{CountOverride, ExperimentMode, SplitConfig, WindowSpec};

/// Catchment count of the reference study and its fixed training share.
pub const REFERENCE_SPLIT: CountOverride = CountOverride { total: 671, train: 534 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_csv: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { dynamic_csv: None, static_csv: None, output_dir: PathBuf::from("runs/latest") }
    }
}

/// Every source of randomness in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Seeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    pub dropout: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self { split: seed, init: seed, shuffle: seed, dropout: seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Inclusive study interval applied to every catchment, `YYYY-MM-DD`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_date: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_date: Option<String>,
    pub threads: usize,
    pub paths: Paths,
    pub seeds: Seeds,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            start_date: None,
            end_date: None,
            threads: 1,
            paths: Paths::default(),
            seeds: Seeds::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Resolves `paper` or `ablation-<variant>`.
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self { preset: Some(name.to_string()), ..Self::default() };
        cfg.data.window = WindowSpec { context_len: 21, horizon: 1, stride: 1 };
        cfg.data.split = SplitConfig { ratio: 0.8, seed: 0, count_override: Some(REFERENCE_SPLIT) };
        cfg.train.epochs = 120;
        cfg.train.learning_rate = 0.001;
        match name {
            "paper" => {
                cfg.data.mode = ExperimentMode::Multivariate;
                cfg.data.encoding = crate::encodings::EncodingConfig::linear().with_static(true);
                cfg.data.encoding.use_annual_fourier = true;
                cfg.data.encoding.include_month = true;
            }
            other => {
                let variant = other.strip_prefix("ablation-").ok_or_else(|| {
                    Error::Config(format!(
                        "unknown preset {other:?}; expected paper or ablation-<variant> with variant one of {}",
                        AblationGrid::VARIANT_NAMES.join(", ")
                    ))
                })?;
                cfg.data.mode = ExperimentMode::RainfallRunoff;
                cfg.data.encoding = AblationGrid::variant(&variant.replace('-', "_"))?;
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid run configuration: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    /// Checks values and that referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if !(self.data.split.ratio > 0.0 && self.data.split.ratio < 1.0) {
            return Err(Error::Config(format!("split ratio {} must lie in (0, 1)", self.data.split.ratio)));
        }
        self.data.encoding.validate()?;
        self.data.window.validate()?;
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.model.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} must lie in [0, 1)", self.model.dropout_rate)));
        }
        if self.model.hidden_size == 0 || self.model.encoder_width == 0 {
            return Err(Error::Config("hidden size and encoder width must be >= 1".into()));
        }
        let dynamic = self
            .paths
            .dynamic_csv
            .as_ref()
            .ok_or_else(|| Error::Config("no dynamic CSV given (--dynamic or paths.dynamic_csv)".into()))?;
        if !dynamic.is_file() {
            return Err(Error::Config(format!("dynamic CSV {} does not exist", dynamic.display())));
        }
        let needs_static = self.data.encoding.include_static || self.data.encoding.use_linear_space;
        match &self.paths.static_csv {
            Some(p) if !p.is_file() => {
                return Err(Error::Config(format!("static CSV {} does not exist", p.display())));
            }
            None if needs_static => {
                return Err(Error::Config(
                    "the encoding uses static attributes or gauge coordinates but no static CSV was given (--static)"
                        .into(),
                ));
            }
            _ => {}
        }
        for d in [&self.start_date, &self.end_date].into_iter().flatten() {
            crate::dataset::parse_date(d)?;
        }
        Ok(())
    }

    /// Protocol with every seed taken from the seed table.
    pub fn protocol(&self) -> ExperimentProtocol {
        let mut data = self.data.clone();
        data.split.seed = self.seeds.split;
        let mut train = self.train.clone();
        train.shuffle_seed = self.seeds.shuffle;
        train.dropout_seed = self.seeds.dropout;
        ExperimentProtocol { data, model: self.model.clone(), train, init_seed: self.seeds.init }
    }
}
