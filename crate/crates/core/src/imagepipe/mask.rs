//! Global-aware blind-spot mask mapper.
//!
//! With stride `s`, entry `k = a * s + b` of the stack masks every pixel
//! `(s*i + a, s*j + b)`. The `s^2` masked sets partition the image, so every
//! pixel is a blind spot in exactly one entry.

use ndarray::{Array2, Array3, ArrayView3, Axis};

use crate::error::Result;

/// The `s^2` blind copies of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindStack {
    pub blinds: Vec<Array3<f32>>,
    /// Masked `(row, col)` positions of each entry, in raster order.
    pub mask_positions: Vec<Vec<(usize, usize)>>,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
}

impl BlindStack {
    /// Index of the entry that masks `(r, c)`.
    pub fn owner(&self, r: usize, c: usize) -> usize {
        (r % self.stride) * self.stride + c % self.stride
    }

    /// Boolean mask of entry `k`.
    pub fn mask(&self, k: usize) -> Array2<bool> {
        let mut m = Array2::from_elem((self.height, self.width), false);
        for &(r, c) in &self.mask_positions[k] {
            m[[r, c]] = true;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.blinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blinds.is_empty()
    }
}

/// Mean of the in-bounds 4-neighbours of `(r, c)`, per channel. The sum is
/// formed in `f64` (exact for at most four terms), so equal neighbours give
/// back their value bit for bit.
pub fn neighbor_fill(img: &ArrayView3<'_, f32>, r: usize, c: usize, out: &mut [f32]) {
    let (h, w, ch) = img.dim();
    let mut acc = vec![0.0f64; ch];
    let mut count = 0u32;
    let mut add = |y: usize, x: usize| {
        for k in 0..ch {
            acc[k] += img[[y, x, k]] as f64;
        }
        count += 1;
    };
    if r > 0 {
        add(r - 1, c);
    }
    if r + 1 < h {
        add(r + 1, c);
    }
    if c > 0 {
        add(r, c - 1);
    }
    if c + 1 < w {
        add(r, c + 1);
    }
    for k in 0..ch {
        out[k] = if count > 0 {
            (acc[k] / count as f64) as f32
        } else {
            // a 1x1 image has no neighbours; keep the pixel itself
            img[[r, c, k]]
        };
    }
}

/// Builds the blind stack of `img`. Masked pixels are replaced by the mean of
/// their valid 4-neighbours in the noisy input; all others are copied.
pub fn mask_map(img: &Array3<f32>, s: usize) -> Result<BlindStack> {
    let (h, w, ch) = img.dim();
    if s == 0 {
        return Err(config_err!("mask stride must be at least 1"));
    }
    if s > h.min(w) {
        return Err(config_err!("mask stride {s} exceeds image extent {h}x{w}"));
    }
    let view = img.view();
    let mut fill = vec![0.0f32; ch];
    let mut blinds = Vec::with_capacity(s * s);
    let mut positions = Vec::with_capacity(s * s);
    for a in 0..s {
        for b in 0..s {
            let mut blind = img.clone();
            let mut pos = Vec::with_capacity(h.div_ceil(s) * w.div_ceil(s));
            for r in (a..h).step_by(s) {
                for c in (b..w).step_by(s) {
                    neighbor_fill(&view, r, c, &mut fill);
                    for k in 0..ch {
                        blind[[r, c, k]] = fill[k];
                    }
                    pos.push((r, c));
                }
            }
            blinds.push(blind);
            positions.push(pos);
        }
    }
    Ok(BlindStack {
        blinds,
        mask_positions: positions,
        stride: s,
        height: h,
        width: w,
    })
}

/// Reassembles one image from per-entry outputs: pixel `(r, c)` is read from
/// the output whose entry masked it.
pub fn collect_blind(outputs: &[Array3<f32>], stack: &BlindStack) -> Result<Array3<f32>> {
    if outputs.len() != stack.len() {
        return Err(shape_err!("{} outputs for a stack of {}", outputs.len(), stack.len()));
    }
    let dim = outputs[0].dim();
    if dim.0 != stack.height || dim.1 != stack.width || outputs.iter().any(|o| o.dim() != dim) {
        return Err(shape_err!("outputs do not match the {}x{} stack", stack.height, stack.width));
    }
    let mut out = Array3::zeros(dim);
    for (k, pos) in stack.mask_positions.iter().enumerate() {
        for &(r, c) in pos {
            out.index_axis_mut(Axis(0), r)
                .index_axis_mut(Axis(0), c)
                .assign(&outputs[k].index_axis(Axis(0), r).index_axis(Axis(0), c));
        }
    }
    Ok(out)
}
