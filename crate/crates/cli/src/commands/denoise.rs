use std::fs;
use std::path::Path;

use denoise_core::imagepipe::dataset::{list_dataset, read_image, save_image};
use denoise_core::model::Checkpoint;
use denoise_core::Error;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenoiseSummary {
    pub written: Vec<String>,
    /// Unreadable inputs with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Denoises every image of `input` into `output` under the same names and
/// bit depth. Unreadable files are skipped; an input whose channel layout
/// does not fit the checkpoint's colorspace aborts the command.
pub fn denoise_dir(checkpoint: &Path, input: &Path, output: &Path) -> Result<DenoiseSummary, CliError> {
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    let cs = model.config().colorspace;
    if !input.is_dir() {
        return Err(CliError::Usage(format!("input directory {} not found", input.display())));
    }
    let items = list_dataset(input, cs)?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("no images in {}", input.display())));
    }
    fs::create_dir_all(output)?;
    let mut summary = DenoiseSummary::default();
    for item in items {
        if item.colorspace != cs {
            return Err(CliError::Usage(format!(
                "{} is {:?}, checkpoint expects {cs:?}",
                item.name, item.colorspace
            )));
        }
        let (sample, depth) = match read_image(&item.path, cs) {
            Ok(v) => v,
            Err(Error::Config(m)) => return Err(CliError::Usage(m)),
            Err(e) => {
                log::warn!("skipping {}: {e}", item.name);
                summary.skipped.push((item.name, e.to_string()));
                continue;
            }
        };
        let den = model.full_inference(&sample)?;
        let dest = output.join(&item.name);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        save_image(&dest, &den.pixels, depth)?;
        summary.written.push(item.name);
    }
    if summary.written.is_empty() {
        return Err(CliError::Usage("no input image could be read".into()));
    }
    Ok(summary)
}
