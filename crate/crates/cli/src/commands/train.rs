use std::fs;
use std::path::{Path, PathBuf};

use denoise_core::metrics::{emit_report, psnr, EvalResult};
use denoise_core::model::{Checkpoint, DenoiserModel};
use denoise_core::trainer::{
    prepare_validation, score_denoised, CurveLog, CurveRecord, Trainer, BEST_CHECKPOINT, LAST_CHECKPOINT,
};

use crate::config::{RunConfig, CONFIG_ECHO};
use crate::data::load_split;
use crate::{CliError, REPORT_DIR};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub out: PathBuf,
    pub curve: CurveLog,
    /// Mean PSNR of the noisy validation inputs against their references.
    pub noisy_psnr: Option<f64>,
    /// Epoch with the highest validation PSNR.
    pub best: Option<CurveRecord>,
    pub last: Option<CurveRecord>,
    /// Per-image validation scores of the best checkpoint.
    pub scores: EvalResult,
}

/// Trains one run into `cfg.out`. An output directory that already holds
/// the same config continues from its last checkpoint; one holding a
/// different config is refused.
pub fn train(cfg: &RunConfig, data_root: Option<&Path>) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let out = cfg.out.clone();
    let echo = out.join(CONFIG_ECHO);
    if echo.is_file() {
        let prev = RunConfig::load(&echo)?;
        if prev != *cfg {
            return Err(CliError::Usage(format!(
                "{} holds a run with a different config; choose another output directory",
                out.display()
            )));
        }
    }
    let (train_set, val_set) = load_split(cfg, data_root)?;
    fs::create_dir_all(&out)?;
    fs::write(&echo, cfg.to_json())?;

    let val_names: Vec<String> = val_set.iter().map(|(n, _)| n.clone()).collect();
    let val = prepare_validation(
        val_set.into_iter().map(|(_, s)| s).collect(),
        cfg.train.noise.as_ref(),
        cfg.seed(),
    )?;
    let noisy_psnr = if val.is_empty() {
        None
    } else {
        let mut total = 0.0;
        for v in &val {
            total += psnr(&v.pixels, v.clean.as_ref().expect("validation has references"), 1.0)?;
        }
        Some(total / val.len() as f64)
    };
    let train_set: Vec<_> = train_set.into_iter().map(|(_, s)| s).collect();

    let last = out.join(LAST_CHECKPOINT);
    let mut trainer = if last.is_file() {
        let t = Trainer::resume(Checkpoint::load(&last)?, train_set, val.clone(), Some(out.clone()))?;
        log::info!("continuing {} at epoch {}", out.display(), t.state.epoch);
        t
    } else {
        let model = DenoiserModel::new(cfg.model.clone(), cfg.seed())?;
        Trainer::new(model, cfg.train.clone(), train_set, val.clone(), Some(out.clone()))?
    };
    trainer.run()?;

    let best_path = out.join(BEST_CHECKPOINT);
    let best_model = if best_path.is_file() {
        Checkpoint::load(&best_path)?.into_model()?
    } else {
        trainer.model.clone()
    };
    let mut scores = EvalResult::default();
    for (name, v) in val_names.iter().zip(&val) {
        let (p, s) = score_denoised(&best_model, v)?;
        scores.push(name.clone(), p, s);
    }
    emit_report(&scores, &trainer.curve, &out.join(REPORT_DIR))?;
    Ok(TrainOutcome {
        out,
        best: trainer.curve.best_psnr().cloned(),
        last: trainer.curve.records.last().cloned(),
        curve: trainer.curve,
        noisy_psnr,
        scores,
    })
}
