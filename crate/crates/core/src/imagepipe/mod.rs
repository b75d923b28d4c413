//! Deterministic image transforms feeding the network.
//!
//! Images are `H x W x C` arrays of `f32` in `[0, 1]`. Every random draw is
//! driven by an explicit seed.

mod augment;
mod bayer;
pub mod dataset;
mod mask;
mod noise;
mod pd;
mod synth;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use augment::{augment, augment_with, AugmentDraw};
pub use bayer::{bayer_merge, bayer_split, bayer_split_via_pd};
pub use mask::{collect_blind, mask_map, neighbor_fill, BlindStack};
pub use noise::{add_gaussian, NoiseSpec};
pub use pd::{pd_merge, pd_merge_arrays, pd_split, pd_split_array};
pub use synth::synthetic_scene;

/// How pixel values should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorSpace {
    Srgb,
    RawBayer,
    Grey,
}

impl ColorSpace {
    /// Channel count of a file in this colorspace (raw mosaics are single-plane).
    pub fn file_channels(self) -> usize {
        match self {
            ColorSpace::Srgb => 3,
            ColorSpace::RawBayer | ColorSpace::Grey => 1,
        }
    }

    /// Channel count seen by the network (raw mosaics are packed to 4 planes).
    pub fn network_channels(self) -> usize {
        match self {
            ColorSpace::Srgb => 3,
            ColorSpace::RawBayer => 4,
            ColorSpace::Grey => 1,
        }
    }
}

/// One image with an optional clean reference of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub pixels: Array3<f32>,
    pub colorspace: ColorSpace,
    pub clean: Option<Array3<f32>>,
}

/// Smallest spatial extent accepted for a dataset image.
pub const MIN_EXTENT: usize = 8;

impl ImageSample {
    pub fn new(pixels: Array3<f32>, colorspace: ColorSpace) -> Self {
        Self {
            pixels,
            colorspace,
            clean: None,
        }
    }

    pub fn with_clean(mut self, clean: Array3<f32>) -> Result<Self> {
        if clean.dim() != self.pixels.dim() {
            return Err(shape_err!("clean reference {:?} vs pixels {:?}", clean.dim(), self.pixels.dim()));
        }
        self.clean = Some(clean);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    /// Checks the dataset-level contract: at least 8x8, values in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let (h, w, _) = self.pixels.dim();
        if h < MIN_EXTENT || w < MIN_EXTENT {
            return Err(shape_err!("image {h}x{w} smaller than {MIN_EXTENT}x{MIN_EXTENT}"));
        }
        let in_range = |a: &Array3<f32>| a.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_range(&self.pixels) || !self.clean.as_ref().map_or(true, in_range) {
            return Err(shape_err!("pixel values outside [0, 1]"));
        }
        Ok(())
    }
}
