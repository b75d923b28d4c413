use ndarray::{stack, Array3, Array4, Axis};

use super::loss::{masked_count, masked_sse};
use crate::error::{Error, Result};
use crate::imagepipe::{mask_map, pd_split_array};
use crate::model::Denoiser;
use crate::tensorcore::ParamStore;

/// Blind images with their noisy targets and masked positions, ready for
/// the loss.
#[derive(Debug, Clone, Default)]
pub struct BlindBatch {
    pub blinds: Vec<Array3<f32>>,
    pub targets: Vec<Array3<f32>>,
    pub masks: Vec<Vec<(usize, usize)>>,
}

impl BlindBatch {
    /// PD-splits every noisy image and adds the full blind stack of each
    /// sub-image.
    pub fn from_noisy(images: &[Array3<f32>], pd_factor: usize, mask_stride: usize) -> Result<Self> {
        let mut out = Self::default();
        for img in images {
            for sub in pd_split_array(img, pd_factor)? {
                let stack = mask_map(&sub, mask_stride)?;
                for (blind, pos) in stack.blinds.into_iter().zip(stack.mask_positions) {
                    out.blinds.push(blind);
                    out.targets.push(sub.clone());
                    out.masks.push(pos);
                }
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.blinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blinds.is_empty()
    }

    fn channels(&self) -> usize {
        self.blinds.first().map_or(0, |b| b.dim().2)
    }

    pub fn masked_terms(&self) -> usize {
        masked_count(&self.masks, self.channels())
    }

    fn chunk(&self, start: usize, end: usize) -> Result<(Array4<f32>, Array4<f32>)> {
        let stack4 = |v: &[Array3<f32>]| {
            let views: Vec<_> = v.iter().map(|a| a.view()).collect();
            stack(Axis(0), &views).map_err(|e| shape_err!("{e}"))
        };
        Ok((stack4(&self.blinds[start..end])?, stack4(&self.targets[start..end])?))
    }

    fn check(&self, micro: usize) -> Result<usize> {
        let count = self.masked_terms();
        if count == 0 {
            return Err(config_err!("blind-spot loss needs at least one masked position"));
        }
        if micro == 0 {
            return Err(config_err!("micro batch must be at least 1"));
        }
        Ok(count)
    }

    fn finish(sse: f64, count: usize) -> Result<f64> {
        let loss = sse / count as f64;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite training loss {loss}")));
        }
        Ok(loss)
    }

    /// Mean masked loss of the stage-2 output, `micro` entries per forward.
    pub fn loss(&self, net: &Denoiser, params: &ParamStore<f32>, micro: usize) -> Result<f64> {
        let count = self.check(micro)?;
        let mut sse = 0.0;
        for start in (0..self.len()).step_by(micro) {
            let end = (start + micro).min(self.len());
            let (x, target) = self.chunk(start, end)?;
            let fwd = net.forward_blind(params, &x)?;
            sse += masked_sse(&fwd.stage2, &target, &self.masks[start..end], count as f64)?.0;
        }
        Self::finish(sse, count)
    }

    /// As [`BlindBatch::loss`], also resetting and filling the parameter
    /// gradients.
    pub fn loss_and_grad(&self, net: &Denoiser, params: &mut ParamStore<f32>, micro: usize) -> Result<f64> {
        let count = self.check(micro)?;
        params.zero_grad();
        let mut sse = 0.0;
        for start in (0..self.len()).step_by(micro) {
            let end = (start + micro).min(self.len());
            let (x, target) = self.chunk(start, end)?;
            let fwd = net.forward_blind(params, &x)?;
            let (part, g) = masked_sse(&fwd.stage2, &target, &self.masks[start..end], count as f64)?;
            sse += part;
            net.backward_blind(params, &fwd, &g)?;
        }
        Self::finish(sse, count)
    }
}
