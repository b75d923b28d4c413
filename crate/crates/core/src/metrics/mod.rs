//! PSNR, SSIM and report emission.

mod report;

pub use report::{emit_report, ReportFiles, CURVES_SVG, SUMMARY_CSV};

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// PSNR values at or above this are shown as this.
pub const PSNR_DISPLAY_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Array3<f32>, b: &Array3<f32>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape_err!("image shapes differ: {:?} vs {:?}", a.dim(), b.dim()));
    }
    if a.is_empty() {
        return Err(shape_err!("cannot score an empty image"));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)`; identical images give `+inf`.
pub fn psnr(a: &Array3<f32>, b: &Array3<f32>, peak: f64) -> Result<f64> {
    same_shape(a, b)?;
    let sse: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sse / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Caps infinite or very large PSNR for display.
pub fn psnr_display(v: f64) -> f64 {
    v.min(PSNR_DISPLAY_CAP)
}

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-(x * x) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter_valid(x: &ArrayView2<'_, f64>, k: &[f64]) -> Array2<f64> {
    let (h, w) = x.dim();
    let n = k.len();
    let (ho, wo) = (h + 1 - n, w + 1 - n);
    let mut tmp = Array2::<f64>::zeros((h, wo));
    for i in 0..h {
        for j in 0..wo {
            tmp[[i, j]] = (0..n).map(|t| k[t] * x[[i, j + t]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((ho, wo));
    for i in 0..ho {
        for j in 0..wo {
            out[[i, j]] = (0..n).map(|t| k[t] * tmp[[i + t, j]]).sum();
        }
    }
    out
}

fn ssim_plane(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, peak: f64) -> f64 {
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let ux = filter_valid(&x, &k);
    let uy = filter_valid(&y, &k);
    let uxx = filter_valid(&(&x * &x).view(), &k);
    let uyy = filter_valid(&(&y * &y).view(), &k);
    let uxy = filter_valid(&(&x * &y).view(), &k);
    let mut total = 0.0;
    ndarray::Zip::from(&ux)
        .and(&uy)
        .and(&uxx)
        .and(&uyy)
        .and(&uxy)
        .for_each(|&mx, &my, &sxx, &syy, &sxy| {
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let vxy = sxy - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * vxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
        });
    total / ux.len() as f64
}

/// Mean SSIM over the valid region, averaged over channels.
pub fn ssim(a: &Array3<f32>, b: &Array3<f32>, peak: f64) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w, c) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err!("{h}x{w} image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"));
    }
    let a = a.mapv(|v| v as f64);
    let b = b.mapv(|v| v as f64);
    let total: f64 = (0..c)
        .map(|ch| ssim_plane(a.index_axis(Axis(2), ch), b.index_axis(Axis(2), ch), peak))
        .sum();
    Ok(total / c as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub images: Vec<ImageScore>,
}

impl EvalResult {
    pub fn push(&mut self, name: impl Into<String>, psnr: f64, ssim: f64) {
        self.images.push(ImageScore {
            name: name.into(),
            psnr,
            ssim,
        });
    }

    /// Scores a denoised image against its reference and records it.
    pub fn score(&mut self, name: impl Into<String>, denoised: &Array3<f32>, clean: &Array3<f32>) -> Result<()> {
        let p = psnr(denoised, clean, 1.0)?;
        let s = ssim(denoised, clean, 1.0)?;
        self.push(name, p, s);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Mean PSNR; infinite if any image is a perfect match. `None` when empty.
    pub fn mean_psnr(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.images.iter().map(|s| s.psnr).sum::<f64>() / self.len() as f64)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.images.iter().map(|s| s.ssim).sum::<f64>() / self.len() as f64)
    }
}
