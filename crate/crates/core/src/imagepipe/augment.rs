use ndarray::{s, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImageSample;
use crate::error::Result;

/// The random choices of one augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugmentDraw {
    pub top: usize,
    pub left: usize,
    pub rot90: bool,
    pub hflip: bool,
    pub vflip: bool,
}

impl AugmentDraw {
    pub fn sample(h: usize, w: usize, crop: usize, rng: &mut impl Rng) -> Self {
        Self {
            top: rng.random_range(0..=h - crop),
            left: rng.random_range(0..=w - crop),
            rot90: rng.random_bool(0.5),
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
        }
    }
}

fn apply(a: &Array3<f32>, crop: usize, d: &AugmentDraw) -> Array3<f32> {
    let mut v = a.slice(s![d.top..d.top + crop, d.left..d.left + crop, ..]);
    if d.rot90 {
        // counter-clockwise quarter turn: transpose then flip rows
        v.swap_axes(0, 1);
        v.invert_axis(Axis(0));
    }
    if d.hflip {
        v.invert_axis(Axis(1));
    }
    if d.vflip {
        v.invert_axis(Axis(0));
    }
    v.as_standard_layout().into_owned()
}

/// Applies a fixed draw to the pixels and the clean reference alike.
pub fn augment_with(img: &ImageSample, crop: usize, draw: &AugmentDraw) -> Result<ImageSample> {
    let (h, w, _) = img.pixels.dim();
    if crop == 0 || crop > h.min(w) || draw.top + crop > h || draw.left + crop > w {
        return Err(shape_err!("crop {crop} at ({}, {}) does not fit {h}x{w}", draw.top, draw.left));
    }
    Ok(ImageSample {
        pixels: apply(&img.pixels, crop, draw),
        colorspace: img.colorspace,
        clean: img.clean.as_ref().map(|c| apply(c, crop, draw)),
    })
}

/// Random square crop followed by a random quarter turn and random flips.
pub fn augment(img: &ImageSample, crop: usize, seed: u64) -> Result<ImageSample> {
    let (h, w, _) = img.pixels.dim();
    if crop == 0 || crop > h.min(w) {
        return Err(shape_err!("crop {crop} larger than image {h}x{w}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = AugmentDraw::sample(h, w, crop, &mut rng);
    augment_with(img, crop, &draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagepipe::ColorSpace;
    use ndarray::Array;

    fn ramp(h: usize, w: usize) -> ImageSample {
        let px = Array::from_shape_fn((h, w, 1), |(i, j, _)| (i * w + j) as f32 / (h * w) as f32);
        let clean = px.mapv(|v| 1.0 - v);
        ImageSample::new(px, ColorSpace::Grey).with_clean(clean).unwrap()
    }

    #[test]
    fn default_crop_shape() {
        let img = ramp(160, 150);
        let out = augment(&img, 128, 1).unwrap();
        assert_eq!(out.pixels.dim(), (128, 128, 1));
    }

    #[test]
    fn seeded_output_is_reproducible() {
        let img = ramp(40, 40);
        assert_eq!(augment(&img, 16, 9).unwrap(), augment(&img, 16, 9).unwrap());
    }

    #[test]
    fn identity_draw_is_pure_crop() {
        let img = ramp(20, 20);
        let d = AugmentDraw {
            top: 3,
            left: 5,
            ..Default::default()
        };
        let out = augment_with(&img, 8, &d).unwrap();
        assert_eq!(out.pixels, img.pixels.slice(s![3..11, 5..13, ..]).to_owned());
    }

    #[test]
    fn pairs_receive_identical_transforms() {
        let img = ramp(24, 24);
        for seed in 0..16 {
            let out = augment(&img, 12, seed).unwrap();
            let clean = out.clean.unwrap();
            assert_eq!(clean, out.pixels.mapv(|v| 1.0 - v));
        }
    }

    #[test]
    fn quarter_turn_moves_corners() {
        let img = ramp(4, 4);
        let d = AugmentDraw {
            rot90: true,
            ..Default::default()
        };
        let out = augment_with(&img, 4, &d).unwrap();
        // top-right corner becomes top-left under a counter-clockwise turn
        assert_eq!(out.pixels[[0, 0, 0]], img.pixels[[0, 3, 0]]);
        assert_eq!(out.pixels[[3, 0, 0]], img.pixels[[0, 0, 0]]);
    }

    #[test]
    fn oversized_crop_rejected() {
        let img = ramp(10, 12);
        assert!(matches!(augment(&img, 11, 0), Err(crate::Error::Shape(_))));
    }
}
