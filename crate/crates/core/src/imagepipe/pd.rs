//! Pixel-shuffle downsampling.

use ndarray::{s, Array3};

use super::ImageSample;
use crate::error::Result;

/// Splits an image into `p * p` sub-images; sub-image `a * p + b` holds
/// source pixels `(p*i + a, p*j + b)`.
pub fn pd_split_array<T: Copy>(img: &Array3<T>, p: usize) -> Result<Vec<Array3<T>>> {
    let (h, w, _) = img.dim();
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(shape_err!("{h}x{w} image not divisible by PD factor {p}"));
    }
    let mut out = Vec::with_capacity(p * p);
    for a in 0..p {
        for b in 0..p {
            out.push(img.slice(s![a..;p, b..;p, ..]).to_owned());
        }
    }
    Ok(out)
}

pub fn pd_merge_arrays<T: Copy + Default>(subs: &[Array3<T>], p: usize) -> Result<Array3<T>> {
    if p == 0 || subs.len() != p * p {
        return Err(shape_err!("expected {} sub-images for PD factor {p}, got {}", p * p, subs.len()));
    }
    let dim = subs[0].dim();
    if subs.iter().any(|s| s.dim() != dim) {
        return Err(shape_err!("PD sub-images have unequal shapes"));
    }
    let (sh, sw, c) = dim;
    let mut out = Array3::from_elem((sh * p, sw * p, c), T::default());
    for a in 0..p {
        for b in 0..p {
            out.slice_mut(s![a..;p, b..;p, ..]).assign(&subs[a * p + b]);
        }
    }
    Ok(out)
}

pub fn pd_split(img: &ImageSample, p: usize) -> Result<Vec<ImageSample>> {
    let pixels = pd_split_array(&img.pixels, p)?;
    let clean = match &img.clean {
        Some(c) => pd_split_array(c, p)?.into_iter().map(Some).collect(),
        None => vec![None; pixels.len()],
    };
    Ok(pixels
        .into_iter()
        .zip(clean)
        .map(|(pixels, clean)| ImageSample {
            pixels,
            colorspace: img.colorspace,
            clean,
        })
        .collect())
}

pub fn pd_merge(subs: &[ImageSample], p: usize) -> Result<ImageSample> {
    let first = subs
        .first()
        .ok_or_else(|| shape_err!("no sub-images to merge"))?;
    let pixels: Vec<_> = subs.iter().map(|s| s.pixels.clone()).collect();
    let merged = pd_merge_arrays(&pixels, p)?;
    let clean = if subs.iter().all(|s| s.clean.is_some()) {
        let cs: Vec<_> = subs.iter().map(|s| s.clean.clone().unwrap()).collect();
        Some(pd_merge_arrays(&cs, p)?)
    } else {
        None
    };
    Ok(ImageSample {
        pixels: merged,
        colorspace: first.colorspace,
        clean,
    })
}
