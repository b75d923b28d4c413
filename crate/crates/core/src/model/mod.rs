//! End-to-end denoiser: blind-spot pipeline around the two-stage network.
//!
//! ```text
//! stage1 = blind - stack(blind)
//! stage2 = stage1 - sne(stage1)
//! ```

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, FORMAT_VERSION};

use ndarray::{stack, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::cadt::{CadtStack, StackCache, StackConfig};
use crate::error::Result;
use crate::imagepipe::{
    bayer_merge, bayer_split, collect_blind, mask_map, pd_merge_arrays, pd_split_array, ColorSpace, ImageSample,
};
use crate::sne::{Sne, SneCache};
use crate::tensorcore::{ParamInit, ParamStore, Real};

/// Blind images pushed through the network at once during inference.
pub const INFER_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub stack: StackConfig,
    pub enable_sne: bool,
    pub mask_stride: usize,
    pub pd_factor: usize,
    pub colorspace: ColorSpace,
}

impl ModelConfig {
    /// Full-size network. Pixel-shuffle downsampling (p = 2) is used for raw
    /// and greyscale data, whose noise may be spatially correlated; sRGB data
    /// is synthetic white noise and skips it.
    pub fn paper(colorspace: ColorSpace) -> Self {
        Self {
            stack: StackConfig::paper(colorspace.network_channels()),
            enable_sne: true,
            mask_stride: 4,
            pd_factor: if colorspace == ColorSpace::Srgb { 1 } else { 2 },
            colorspace,
        }
    }

    pub fn toy() -> Self {
        Self {
            stack: StackConfig::toy(1),
            enable_sne: true,
            mask_stride: 4,
            pd_factor: 1,
            colorspace: ColorSpace::Grey,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        if self.mask_stride == 0 || self.pd_factor == 0 {
            return Err(config_err!("mask_stride and pd_factor must be at least 1"));
        }
        let want = self.colorspace.network_channels();
        if self.stack.image_channels != want {
            return Err(config_err!(
                "colorspace {:?} needs {want} image channels, stack has {}",
                self.colorspace,
                self.stack.image_channels
            ));
        }
        Ok(())
    }

    /// Spatial multiple every inference input must satisfy (after Bayer packing).
    pub fn spatial_multiple(&self) -> usize {
        self.pd_factor * self.mask_stride
    }
}

/// Network architecture, independent of parameter precision.
#[derive(Debug, Clone)]
pub struct Denoiser {
    pub config: ModelConfig,
    pub stack: CadtStack,
    pub sne: Option<Sne>,
}

#[derive(Debug, Clone)]
pub struct BlindForward<T> {
    pub stage1: Array4<T>,
    pub stage2: Array4<T>,
    stack: StackCache<T>,
    sne: Option<SneCache<T>>,
}

impl Denoiser {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let stack = CadtStack::new(config.stack.clone())?;
        let sne = config.enable_sne.then(|| Sne::new(config.stack.image_channels));
        Ok(Self { config, stack, sne })
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> Result<ParamStore<T>> {
        let init = ParamInit::new(seed);
        let mut store = ParamStore::new();
        self.stack.init(&mut store, &init)?;
        if let Some(sne) = &self.sne {
            sne.init(&mut store, &init)?;
        }
        Ok(store)
    }

    pub fn forward_blind<T: Real>(&self, store: &ParamStore<T>, blind: &Array4<T>) -> Result<BlindForward<T>> {
        let (noise, stack) = self.stack.forward(store, blind)?;
        let stage1 = blind - &noise;
        let (stage2, sne) = match &self.sne {
            Some(s) => {
                let (res, c) = s.forward(store, &stage1)?;
                (&stage1 - &res, Some(c))
            }
            None => (stage1.clone(), None),
        };
        Ok(BlindForward {
            stage1,
            stage2,
            stack,
            sne,
        })
    }

    /// Backpropagates a gradient on `stage2`; returns the gradient on the blind input.
    pub fn backward_blind<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        fwd: &BlindForward<T>,
        dstage2: &Array4<T>,
    ) -> Result<Array4<T>> {
        let dstage1 = match (&self.sne, &fwd.sne) {
            (Some(s), Some(c)) => dstage2 + &s.backward(store, c, &dstage2.mapv(|v| -v))?,
            (None, None) => dstage2.clone(),
            _ => return Err(crate::Error::State("forward cache does not match the network".into())),
        };
        let dnoise = dstage1.mapv(|v| -v);
        let dthrough = self.stack.backward(store, &fwd.stack, &dnoise)?;
        Ok(dstage1 + dthrough)
    }
}

/// Splits into PD sub-images, builds the blind stack of each, runs `net` on
/// the blinds and reassembles the collected outputs.
pub fn blind_pipeline(
    pixels: &Array3<f32>,
    pd_factor: usize,
    mask_stride: usize,
    mut net: impl FnMut(&Array4<f32>) -> Result<Array4<f32>>,
) -> Result<Array3<f32>> {
    let (h, w, _) = pixels.dim();
    let m = pd_factor * mask_stride;
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(shape_err!(
            "{h}x{w} image not divisible by PD factor {pd_factor} times mask stride {mask_stride}"
        ));
    }
    let mut outs = Vec::with_capacity(pd_factor * pd_factor);
    for sub in pd_split_array(pixels, pd_factor)? {
        let blinds = mask_map(&sub, mask_stride)?;
        let views: Vec<_> = blinds.blinds.iter().map(|b| b.view()).collect();
        let batch = stack(Axis(0), &views).map_err(|e| shape_err!("{e}"))?;
        let y = net(&batch)?;
        if y.dim() != batch.dim() {
            return Err(shape_err!("network output {:?} vs blind batch {:?}", y.dim(), batch.dim()));
        }
        let per_blind: Vec<Array3<f32>> = y.outer_iter().map(|v| v.to_owned()).collect();
        outs.push(collect_blind(&per_blind, &blinds)?);
    }
    pd_merge_arrays(&outs, pd_factor)
}

/// A network with single-precision parameters.
#[derive(Debug, Clone)]
pub struct DenoiserModel {
    pub net: Denoiser,
    pub params: ParamStore<f32>,
}

impl DenoiserModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let net = Denoiser::new(config)?;
        let params = net.init_params(seed)?;
        Ok(Self { net, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    /// Sets every parameter to zero, so the model predicts no noise.
    pub fn zero_all(&mut self) {
        for (_, p) in self.params.iter_mut() {
            p.value.fill(0.0);
        }
    }

    pub fn forward_blind(&self, blind: &Array4<f32>) -> Result<(Array4<f32>, Array4<f32>)> {
        let f = self.net.forward_blind(&self.params, blind)?;
        Ok((f.stage1, f.stage2))
    }

    /// Stage-2 output for a blind batch, evaluated in chunks.
    fn stage2_chunked(&self, batch: &Array4<f32>) -> Result<Array4<f32>> {
        let mut parts = Vec::new();
        for chunk in batch.axis_chunks_iter(Axis(0), INFER_CHUNK) {
            parts.push(self.net.forward_blind(&self.params, &chunk.to_owned())?.stage2);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| shape_err!("{e}"))
    }

    /// Denoises one image; the result is clamped to `[0, 1]`.
    pub fn full_inference(&self, noisy: &ImageSample) -> Result<ImageSample> {
        let cfg = self.config();
        if noisy.colorspace != cfg.colorspace {
            return Err(config_err!(
                "model expects {:?} input, got {:?}",
                cfg.colorspace,
                noisy.colorspace
            ));
        }
        let packed = if cfg.colorspace == ColorSpace::RawBayer {
            bayer_split(noisy)?
        } else {
            noisy.clone()
        };
        if packed.channels() != cfg.stack.image_channels {
            return Err(shape_err!(
                "model expects {} channels, got {}",
                cfg.stack.image_channels,
                packed.channels()
            ));
        }
        let mut out = blind_pipeline(&packed.pixels, cfg.pd_factor, cfg.mask_stride, |b| self.stage2_chunked(b))?;
        out.mapv_inplace(|v| v.clamp(0.0, 1.0));
        let result = ImageSample {
            pixels: out,
            colorspace: packed.colorspace,
            clean: packed.clean,
        };
        if cfg.colorspace == ColorSpace::RawBayer {
            bayer_merge(&result)
        } else {
            Ok(result)
        }
    }
}
