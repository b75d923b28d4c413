use std::collections::BTreeSet;
use std::path::Path;

use denoise_core::imagepipe::dataset::read_image;
use denoise_core::imagepipe::{ColorSpace, ImageSample};
use denoise_core::metrics::{emit_report, EvalResult};
use denoise_core::trainer::CurveLog;
use denoise_core::Error;

use crate::{CliError, REPORT_DIR};

fn png_names(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("directory {} not found", dir.display())));
    }
    Ok(std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect())
}

/// Loads a greyscale or RGB file, whichever it is.
fn load_any(path: &Path) -> Result<ImageSample, CliError> {
    match read_image(path, ColorSpace::Grey) {
        Ok((s, _)) => Ok(s),
        Err(Error::Config(_)) => Ok(read_image(path, ColorSpace::Srgb)?.0),
        Err(e) => Err(e.into()),
    }
}

/// Scores every denoised file against the clean file of the same name and
/// writes `report/summary.csv` under `out`.
pub fn eval_dirs(denoised: &Path, clean: &Path, out: &Path) -> Result<EvalResult, CliError> {
    let a = png_names(denoised)?;
    let b = png_names(clean)?;
    if a.is_empty() && b.is_empty() {
        return Err(CliError::Usage("no images to evaluate".into()));
    }
    let unpaired: Vec<&String> = a.symmetric_difference(&b).collect();
    if !unpaired.is_empty() {
        let list: Vec<&str> = unpaired.iter().map(|s| s.as_str()).collect();
        return Err(CliError::Usage(format!("unpaired files: {}", list.join(", "))));
    }
    let mut result = EvalResult::default();
    for name in &a {
        let d = load_any(&denoised.join(name))?;
        let c = load_any(&clean.join(name))?;
        result.score(name.clone(), &d.pixels, &c.pixels)?;
    }
    emit_report(&result, &CurveLog::default(), &out.join(REPORT_DIR))?;
    Ok(result)
}
