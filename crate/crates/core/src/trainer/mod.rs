//! Blind-spot objective, step learning-rate schedule and the training loop.

mod batch;
mod loss;
mod run;

pub use batch::BlindBatch;
pub use loss::{blind_l2_loss, masked_count, masked_sse};
pub use run::{
    prepare_validation, score_denoised, StepReport, TrainState, Trainer, BEST_CHECKPOINT, CURVE_FILE, FINAL_CHECKPOINT, LAST_CHECKPOINT,
};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imagepipe::{ColorSpace, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Side of the square training crop, measured on the network input
    /// (after Bayer packing for raw data).
    pub crop: usize,
    pub lr_init: f64,
    pub lr_gamma: f64,
    pub lr_step: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Crops drawn from every training image per epoch.
    #[serde(default = "one")]
    pub patches_per_image: usize,
    /// Blind images per forward/backward pass; gradients are accumulated
    /// over the whole batch before each optimizer step.
    #[serde(default = "sixteen")]
    pub micro_batch: usize,
    #[serde(default = "yes")]
    pub augment: bool,
    /// Synthetic mode: clean training images get this noise added on the fly.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

fn one() -> usize {
    1
}

fn sixteen() -> usize {
    16
}

fn yes() -> bool {
    true
}

/// Initial learning rate: 3e-4 for synthetic sRGB, 1e-4 for raw and real data.
pub fn default_lr(colorspace: ColorSpace, synthetic: bool) -> f64 {
    if synthetic && colorspace == ColorSpace::Srgb {
        3e-4
    } else {
        1e-4
    }
}

impl TrainConfig {
    pub fn paper(colorspace: ColorSpace, noise: Option<NoiseSpec>) -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            crop: 128,
            lr_init: default_lr(colorspace, noise.is_some()),
            lr_gamma: 0.25,
            lr_step: 20,
            weight_decay: 1e-8,
            seed: 0,
            patches_per_image: 1,
            micro_batch: 16,
            augment: true,
            noise,
        }
    }

    /// Desk-scale recipe for the greyscale toy task: 20 epochs on 32x32 crops
    /// with a faster staircase (x0.25 every 8 epochs).
    pub fn toy() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            crop: 32,
            lr_init: 2e-3,
            lr_gamma: 0.25,
            lr_step: 8,
            weight_decay: 1e-8,
            seed: 0,
            patches_per_image: 3,
            micro_batch: 16,
            augment: true,
            noise: Some(NoiseSpec::fixed(25.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.crop == 0 || self.lr_step == 0 {
            return Err(config_err!("epochs, batch_size, crop and lr_step must be positive"));
        }
        if self.patches_per_image == 0 || self.micro_batch == 0 {
            return Err(config_err!("patches_per_image and micro_batch must be positive"));
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(config_err!("lr_init must be positive, got {}", self.lr_init));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(config_err!("lr_gamma must lie in (0, 1], got {}", self.lr_gamma));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(config_err!("weight_decay must be non-negative"));
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_schedule(self.lr_init, self.lr_gamma, self.lr_step, epoch)
    }
}

/// `lr_init * gamma^floor(epoch / step)`.
pub fn lr_schedule(lr_init: f64, gamma: f64, step: usize, epoch: usize) -> f64 {
    lr_init * gamma.powi((epoch / step) as i32)
}

/// One record per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Capped at the display ceiling so the value survives JSON.
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveLog {
    pub records: Vec<CurveRecord>,
}

impl CurveLog {
    pub fn push(&mut self, r: CurveRecord) {
        self.records.push(r);
    }

    pub fn best_psnr(&self) -> Option<&CurveRecord> {
        self.records
            .iter()
            .filter(|r| r.val_psnr.is_some())
            .max_by(|a, b| a.val_psnr.partial_cmp(&b.val_psnr).expect("finite"))
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<CurveRecord>, _>>()?;
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    /// Appends one record to a line-delimited JSON file.
    pub fn append_to(path: &Path, r: &CurveRecord) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(r)?)?;
        Ok(())
    }

    pub fn to_values(&self) -> Result<Vec<serde_json::Value>> {
        self.records.iter().map(|r| Ok(serde_json::to_value(r)?)).collect()
    }

    pub fn from_values(v: &[serde_json::Value]) -> Result<Self> {
        let records = v
            .iter()
            .map(|x| serde_json::from_value(x.clone()))
            .collect::<std::result::Result<Vec<CurveRecord>, _>>()?;
        Ok(Self { records })
    }
}

/// Mixes a base seed with tags into an independent stream seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter().fold(splitmix(seed), |h, &t| splitmix(h ^ splitmix(t)))
}
