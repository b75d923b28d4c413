use ndarray::Array4;

use crate::error::Result;

/// Sum of squared residuals at the masked positions of each batch entry, and
/// its gradient scaled by `2 / norm`. Unmasked positions are never read.
pub fn masked_sse(
    pred: &Array4<f32>,
    target: &Array4<f32>,
    masks: &[Vec<(usize, usize)>],
    norm: f64,
) -> Result<(f64, Array4<f32>)> {
    if pred.dim() != target.dim() {
        return Err(shape_err!("prediction {:?} vs target {:?}", pred.dim(), target.dim()));
    }
    let (n, h, w, c) = pred.dim();
    if masks.len() != n {
        return Err(shape_err!("{} mask sets for a batch of {n}", masks.len()));
    }
    let mut grad = Array4::<f32>::zeros(pred.raw_dim());
    let scale = 2.0 / norm;
    let mut sse = 0.0f64;
    for (b, pos) in masks.iter().enumerate() {
        for &(r, col) in pos {
            if r >= h || col >= w {
                return Err(shape_err!("mask position ({r}, {col}) outside {h}x{w}"));
            }
            for k in 0..c {
                let d = pred[[b, r, col, k]] as f64 - target[[b, r, col, k]] as f64;
                sse += d * d;
                grad[[b, r, col, k]] = (scale * d) as f32;
            }
        }
    }
    Ok((sse, grad))
}

/// Number of scalar terms the loss averages over.
pub fn masked_count(masks: &[Vec<(usize, usize)>], channels: usize) -> usize {
    masks.iter().map(|m| m.len()).sum::<usize>() * channels
}

/// Mean squared error over masked positions only, with its gradient w.r.t.
/// `pred`.
pub fn blind_l2_loss(
    pred: &Array4<f32>,
    target: &Array4<f32>,
    masks: &[Vec<(usize, usize)>],
) -> Result<(f64, Array4<f32>)> {
    let count = masked_count(masks, pred.dim().3);
    if count == 0 {
        return Err(config_err!("blind-spot loss needs at least one masked position"));
    }
    let (sse, grad) = masked_sse(pred, target, masks, count as f64)?;
    Ok((sse / count as f64, grad))
}
