use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, BlindBatch, CurveLog, CurveRecord, TrainConfig};
use crate::error::{Error, Result};
use crate::imagepipe::{add_gaussian, augment_with, bayer_split, AugmentDraw, ColorSpace, ImageSample, NoiseSpec};
use crate::metrics::{psnr, psnr_display, ssim};
use crate::model::{Checkpoint, DenoiserModel};
use crate::tensorcore::{adam_step, AdamConfig, OptimizerState};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const CURVE_FILE: &str = "curve.jsonl";

const EPOCH_TAG: u64 = 1;
const STEP_TAG: u64 = 2;
const VAL_TAG: u64 = 3;

/// Position of a run, enough to continue it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    pub epoch: usize,
    pub step_in_epoch: usize,
    pub global_step: u64,
    pub epoch_loss_sum: f64,
    pub best_val_psnr: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedRun {
    config: TrainConfig,
    state: TrainState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Set when this step completed an epoch.
    pub epoch_record: Option<CurveRecord>,
}

/// Builds the noisy validation set. In synthetic mode every image is taken
/// as clean and noised once with a seed derived from `seed`; otherwise every
/// image must already carry its clean reference.
pub fn prepare_validation(images: Vec<ImageSample>, noise: Option<&NoiseSpec>, seed: u64) -> Result<Vec<ImageSample>> {
    images
        .into_iter()
        .enumerate()
        .map(|(i, img)| match noise {
            Some(n) => add_gaussian(&img, n, derive_seed(seed, &[VAL_TAG, i as u64])),
            None if img.clean.is_some() => Ok(img),
            None => Err(config_err!("validation image {i} has no clean reference")),
        })
        .collect()
}

/// Denoises one noisy sample that carries its clean reference and returns
/// (PSNR, SSIM) at peak 1. Raw mosaics are scored on their packed planes.
pub fn score_denoised(model: &DenoiserModel, sample: &ImageSample) -> Result<(f64, f64)> {
    let clean = sample
        .clean
        .as_ref()
        .ok_or_else(|| config_err!("sample has no clean reference"))?;
    let out = model.full_inference(sample)?;
    let (den, cl) = if sample.colorspace == ColorSpace::RawBayer {
        let packed = bayer_split(&out)?;
        (packed.pixels, packed.clean.expect("clean carried through"))
    } else {
        (out.pixels, clean.clone())
    };
    Ok((psnr(&den, &cl, 1.0)?, ssim(&den, &cl, 1.0)?))
}

pub struct Trainer {
    pub model: DenoiserModel,
    pub optimizer: OptimizerState<f32>,
    pub config: TrainConfig,
    pub state: TrainState,
    pub curve: CurveLog,
    /// Training images in the network domain (raw mosaics packed).
    train: Vec<ImageSample>,
    val: Vec<ImageSample>,
    out_dir: Option<PathBuf>,
}

impl Trainer {
    /// `val` must already be noisy with clean references (see
    /// [`prepare_validation`]).
    pub fn new(
        model: DenoiserModel,
        config: TrainConfig,
        train: Vec<ImageSample>,
        val: Vec<ImageSample>,
        out_dir: Option<PathBuf>,
    ) -> Result<Self> {
        let optimizer = OptimizerState::new(AdamConfig {
            learning_rate: config.lr_at(0),
            weight_decay: config.weight_decay,
            ..AdamConfig::default()
        })?;
        let state = TrainState {
            epoch: 0,
            step_in_epoch: 0,
            global_step: 0,
            epoch_loss_sum: 0.0,
            best_val_psnr: None,
        };
        Self::assemble(model, optimizer, config, state, CurveLog::default(), train, val, out_dir)
    }

    /// Continues a run from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(ckpt: Checkpoint, train: Vec<ImageSample>, val: Vec<ImageSample>, out_dir: Option<PathBuf>) -> Result<Self> {
        let saved: SavedRun = serde_json::from_value(ckpt.train_state.clone())
            .map_err(|e| Error::Format(format!("checkpoint has no resumable training state: {e}")))?;
        let curve = CurveLog::from_values(&ckpt.curve)?;
        let optimizer = ckpt
            .optimizer
            .clone()
            .ok_or_else(|| Error::Format("checkpoint has no optimizer state".into()))?;
        let model = ckpt.into_model()?;
        Self::assemble(model, optimizer, saved.config, saved.state, curve, train, val, out_dir)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        model: DenoiserModel,
        optimizer: OptimizerState<f32>,
        config: TrainConfig,
        state: TrainState,
        curve: CurveLog,
        train: Vec<ImageSample>,
        val: Vec<ImageSample>,
        out_dir: Option<PathBuf>,
    ) -> Result<Self> {
        config.validate()?;
        let mc = model.config().clone();
        if train.is_empty() {
            return Err(config_err!("training set is empty"));
        }
        let (p, s, win) = (mc.pd_factor, mc.mask_stride, mc.stack.window);
        if config.crop % p != 0 || (config.crop / p) % win != 0 || config.crop / p < s {
            return Err(config_err!(
                "crop {} must split into PD sub-images (factor {p}) that are multiples of the window {win} and at least the mask stride {s}",
                config.crop
            ));
        }
        let train = train
            .into_iter()
            .map(|img| {
                if img.colorspace != mc.colorspace {
                    return Err(config_err!("training image is {:?}, model expects {:?}", img.colorspace, mc.colorspace));
                }
                let img = if mc.colorspace == ColorSpace::RawBayer { bayer_split(&img)? } else { img };
                if img.height() < config.crop || img.width() < config.crop {
                    return Err(config_err!(
                        "training image {}x{} smaller than crop {}",
                        img.height(),
                        img.width(),
                        config.crop
                    ));
                }
                Ok(img)
            })
            .collect::<Result<Vec<_>>>()?;
        for v in &val {
            if v.clean.is_none() {
                return Err(config_err!("validation images need clean references"));
            }
            if v.colorspace != mc.colorspace {
                return Err(config_err!("validation image is {:?}, model expects {:?}", v.colorspace, mc.colorspace));
            }
        }
        if let Some(d) = &out_dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self {
            model,
            optimizer,
            config,
            state,
            curve,
            train,
            val,
            out_dir,
        })
    }

    pub fn train_images(&self) -> &[ImageSample] {
        &self.train
    }

    pub fn val_images(&self) -> &[ImageSample] {
        &self.val
    }

    pub fn steps_per_epoch(&self) -> usize {
        (self.train.len() * self.config.patches_per_image).div_ceil(self.config.batch_size)
    }

    pub fn finished(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut items: Vec<usize> = (0..self.train.len())
            .flat_map(|i| std::iter::repeat_n(i, self.config.patches_per_image))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[EPOCH_TAG, epoch as u64]));
        items.shuffle(&mut rng);
        items
    }

    /// Noisy crops of step `step` in epoch `epoch`; depends only on the
    /// config seed and the position.
    pub fn step_crops(&self, epoch: usize, step: usize) -> Result<Vec<ImageSample>> {
        let order = self.epoch_order(epoch);
        let bs = self.config.batch_size;
        let start = step * bs;
        let end = (start + bs).min(order.len());
        if start >= end {
            return Err(Error::State(format!("epoch {epoch} has no step {step}")));
        }
        let crop = self.config.crop;
        order[start..end]
            .iter()
            .enumerate()
            .map(|(j, &idx)| {
                let img = &self.train[idx];
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.config.seed,
                    &[STEP_TAG, epoch as u64, step as u64, j as u64],
                ));
                let draw = if self.config.augment {
                    AugmentDraw::sample(img.height(), img.width(), crop, &mut rng)
                } else {
                    AugmentDraw {
                        top: rng.random_range(0..=img.height() - crop),
                        left: rng.random_range(0..=img.width() - crop),
                        ..AugmentDraw::default()
                    }
                };
                let sample = augment_with(img, crop, &draw)?;
                match &self.config.noise {
                    Some(n) => add_gaussian(&sample, n, rng.next_u64()),
                    None => Ok(sample),
                }
            })
            .collect()
    }

    pub fn step_batch(&self, epoch: usize, step: usize) -> Result<BlindBatch> {
        let crops: Vec<_> = self.step_crops(epoch, step)?.into_iter().map(|c| c.pixels).collect();
        let mc = self.model.config();
        BlindBatch::from_noisy(&crops, mc.pd_factor, mc.mask_stride)
    }

    /// One optimizer step. A non-finite loss aborts before any parameter
    /// changes.
    pub fn step(&mut self) -> Result<StepReport> {
        if self.finished() {
            return Err(Error::State("training already finished".into()));
        }
        let (epoch, step) = (self.state.epoch, self.state.step_in_epoch);
        let batch = self.step_batch(epoch, step)?;
        self.optimizer.set_learning_rate(self.config.lr_at(epoch))?;
        let loss = batch.loss_and_grad(&self.model.net, &mut self.model.params, self.config.micro_batch)?;
        adam_step(&mut self.model.params, &mut self.optimizer)?;
        self.model.params.clear_grad();
        self.state.epoch_loss_sum += loss;
        self.state.step_in_epoch += 1;
        self.state.global_step += 1;
        log::debug!("epoch {epoch} step {step} loss {loss:.6e}");
        let epoch_record = if self.state.step_in_epoch == self.steps_per_epoch() {
            Some(self.finish_epoch()?)
        } else {
            None
        };
        Ok(StepReport {
            epoch,
            step,
            loss,
            epoch_record,
        })
    }

    /// Mean PSNR / SSIM of the current model on the validation set; raw data
    /// is scored in the packed domain.
    pub fn validate(&self) -> Result<Option<(f64, f64)>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let (mut p, mut s) = (0.0, 0.0);
        for v in &self.val {
            let (vp, vs) = score_denoised(&self.model, v)?;
            p += psnr_display(vp);
            s += vs;
        }
        let n = self.val.len() as f64;
        Ok(Some((p / n, s / n)))
    }

    fn finish_epoch(&mut self) -> Result<CurveRecord> {
        let epoch = self.state.epoch;
        let metrics = self.validate()?;
        let record = CurveRecord {
            epoch,
            mean_loss: self.state.epoch_loss_sum / self.steps_per_epoch() as f64,
            val_psnr: metrics.map(|m| m.0),
            val_ssim: metrics.map(|m| m.1),
            lr: self.config.lr_at(epoch),
        };
        log::info!(
            "epoch {epoch}: loss {:.6e} val psnr {:?} ssim {:?}",
            record.mean_loss,
            record.val_psnr,
            record.val_ssim
        );
        self.curve.push(record.clone());
        self.state.epoch += 1;
        self.state.step_in_epoch = 0;
        self.state.epoch_loss_sum = 0.0;
        let improved = match (record.val_psnr, self.state.best_val_psnr) {
            (Some(v), Some(b)) => v > b,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            self.state.best_val_psnr = record.val_psnr;
        }
        if let Some(dir) = self.out_dir.clone() {
            std::fs::write(dir.join(CURVE_FILE), self.curve.to_jsonl()?)?;
            let ckpt = self.checkpoint()?;
            if improved {
                ckpt.save(&dir.join(BEST_CHECKPOINT))?;
            }
            ckpt.save(&dir.join(LAST_CHECKPOINT))?;
            if self.finished() {
                ckpt.save(&dir.join(FINAL_CHECKPOINT))?;
            }
        }
        Ok(record)
    }

    /// Runs until the configured number of epochs is reached.
    pub fn run(&mut self) -> Result<&CurveLog> {
        while !self.finished() {
            self.step()?;
        }
        Ok(&self.curve)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            config: self.model.config().clone(),
            params: self.model.params.clone(),
            optimizer: Some(self.optimizer.clone()),
            curve: self.curve.to_values()?,
            train_state: serde_json::to_value(SavedRun {
                config: self.config.clone(),
                state: self.state.clone(),
            })?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint()?.save(path)
    }
}
