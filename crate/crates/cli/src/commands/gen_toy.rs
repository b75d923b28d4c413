use std::fs;
use std::path::{Path, PathBuf};

use denoise_core::imagepipe::dataset::{save_image, BitDepth};

use crate::data::synthetic_set;
use crate::CliError;

/// Writes the clean scenes of a synthetic data source as 16-bit PNGs.
pub fn gen_toy(out: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    if count == 0 || size < 8 {
        return Err(CliError::Usage("need at least one scene of size 8 or more".into()));
    }
    fs::create_dir_all(out)?;
    synthetic_set(count, size, seed)
        .into_iter()
        .map(|(name, s)| {
            let p = out.join(name);
            save_image(&p, &s.pixels, BitDepth::Sixteen)?;
            Ok(p)
        })
        .collect()
}
