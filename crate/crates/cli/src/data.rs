//! Loads the train / validation split described by a [`DataSource`].

use std::path::Path;

use denoise_core::imagepipe::dataset::load_dataset;
use denoise_core::imagepipe::{synthetic_scene, ImageSample};
use denoise_core::trainer::derive_seed;

use crate::config::{resolve, DataSource, RunConfig};
use crate::CliError;

pub type Named = Vec<(String, ImageSample)>;

/// Name of the `i`-th generated scene.
pub fn scene_name(i: usize) -> String {
    format!("scene_{i:03}.png")
}

/// The generated scene set of a synthetic source, in order.
pub fn synthetic_set(count: usize, size: usize, seed: u64) -> Named {
    (0..count)
        .map(|i| (scene_name(i), synthetic_scene(size, size, derive_seed(seed, &[i as u64]))))
        .collect()
}

/// Returns (train, val) images. Validation images are clean in synthetic
/// mode and carry clean references otherwise.
pub fn load_split(cfg: &RunConfig, root: Option<&Path>) -> Result<(Named, Named), CliError> {
    let cs = cfg.mode.colorspace();
    let (train, val) = match &cfg.data {
        DataSource::Synthetic { count, size, seed, holdout } => {
            let mut all = synthetic_set(*count, *size, *seed);
            let val = all.split_off(count - holdout);
            (all, val)
        }
        DataSource::Dir { train, val, holdout } => {
            let dir = resolve(train, root);
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("training directory {} not found", dir.display())));
            }
            let mut all = load_dataset(&dir, cs)?;
            let val = match val {
                Some(v) => {
                    let vdir = resolve(v, root);
                    if !vdir.is_dir() {
                        return Err(CliError::Usage(format!("validation directory {} not found", vdir.display())));
                    }
                    load_dataset(&vdir, cs)?
                }
                None => {
                    if *holdout >= all.len() {
                        return Err(CliError::Usage(format!(
                            "holdout {holdout} leaves no training images out of {}",
                            all.len()
                        )));
                    }
                    let at = all.len() - holdout;
                    all.split_off(at)
                }
            };
            (all, val)
        }
    };
    if train.is_empty() {
        return Err(CliError::Usage("no training images".into()));
    }
    Ok((train, val))
}
