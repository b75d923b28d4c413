//! Run configuration: one strict JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use denoise_core::imagepipe::{ColorSpace, NoiseSpec};
use denoise_core::model::ModelConfig;
use denoise_core::trainer::TrainConfig;

use crate::CliError;

/// Name of the effective config echoed into every output directory.
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Clean sRGB images, Gaussian noise added on the fly.
    SyntheticSrgb,
    /// Noisy raw Bayer mosaics.
    RawBayer,
    /// Greyscale images (synthetic when `train.noise` is set).
    Grey,
}

impl Mode {
    pub fn colorspace(self) -> ColorSpace {
        match self {
            Mode::SyntheticSrgb => ColorSpace::Srgb,
            Mode::RawBayer => ColorSpace::RawBayer,
            Mode::Grey => ColorSpace::Grey,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Paper,
    Toy,
}

/// Where training and validation images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Image directories; relative paths resolve against the data root.
    /// Without `val`, the last `holdout` training images are held out.
    Dir {
        train: PathBuf,
        #[serde(default)]
        val: Option<PathBuf>,
        #[serde(default)]
        holdout: usize,
    },
    /// Generated greyscale scenes (clean); the last `holdout` are validation.
    Synthetic {
        count: usize,
        size: usize,
        seed: u64,
        holdout: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub model: ModelConfig,
    /// `train.seed` is the run seed: it drives parameter init, crops, noise
    /// and validation noise.
    pub train: TrainConfig,
    pub data: DataSource,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn preset(preset: Preset, mode: Mode) -> Self {
        match preset {
            Preset::Paper => {
                let cs = mode.colorspace();
                let noise = (mode == Mode::SyntheticSrgb).then_some(NoiseSpec {
                    sigma_min: 5.0,
                    sigma_max: 50.0,
                    per_image_sigma: true,
                });
                Self {
                    mode,
                    model: ModelConfig::paper(cs),
                    train: TrainConfig::paper(cs, noise),
                    data: DataSource::Dir {
                        train: "train".into(),
                        val: Some("val".into()),
                        holdout: 0,
                    },
                    out: "runs/paper".into(),
                }
            }
            Preset::Toy => Self {
                mode: Mode::Grey,
                model: ModelConfig::toy(),
                train: TrainConfig::toy(),
                data: DataSource::Synthetic {
                    count: 20,
                    size: 64,
                    seed: 0,
                    holdout: 4,
                },
                out: "runs/toy".into(),
            },
        }
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        let cs = self.mode.colorspace();
        if self.model.colorspace != cs {
            return Err(CliError::Usage(format!(
                "model.colorspace {:?} does not match mode {:?}",
                self.model.colorspace, self.mode
            )));
        }
        if self.mode == Mode::SyntheticSrgb && self.train.noise.is_none() {
            return Err(CliError::Usage("mode synthetic-srgb needs train.noise".into()));
        }
        if self.mode == Mode::RawBayer && self.train.noise.is_some() {
            return Err(CliError::Usage("mode raw-bayer trains on real noise; train.noise must be null".into()));
        }
        match &self.data {
            DataSource::Synthetic { count, size, holdout, .. } => {
                if self.mode != Mode::Grey || self.train.noise.is_none() {
                    return Err(CliError::Usage(
                        "data.kind synthetic produces clean greyscale scenes; it needs mode grey and train.noise".into(),
                    ));
                }
                if *holdout >= *count {
                    return Err(CliError::Usage(format!("data.holdout {holdout} leaves no training images out of {count}")));
                }
                if *size < self.train.crop {
                    return Err(CliError::Usage(format!("data.size {size} is smaller than train.crop {}", self.train.crop)));
                }
            }
            DataSource::Dir { val, holdout, .. } => {
                if val.is_some() && *holdout > 0 {
                    return Err(CliError::Usage("data.val and data.holdout are mutually exclusive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Resolves a relative data path against the data root, if one is set.
pub fn resolve(path: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if path.is_relative() => r.join(path),
        _ => path.to_path_buf(),
    }
}
