//! Secondary noise extractor: every channel is standardized over its spatial
//! positions, then a small MLP mixes channels at each position.

use ndarray::Array4;

use crate::cadt::{Mlp, Norm};
use crate::error::Result;
use crate::tensorcore::{LayerNormCache, MlpCache, ParamInit, ParamStore, Real};

pub const SNE_PREFIX: &str = "sne";
pub const SNE_RATIO: usize = 2;

#[derive(Debug, Clone)]
pub struct Sne {
    pub channels: usize,
    pub ln: Norm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct SneCache<T> {
    ln: LayerNormCache<T>,
    normed: Array4<T>,
    mlp: MlpCache<T>,
}

impl Sne {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            // normalized over axis 1 of the [N, H*W, C] view
            ln: Norm::new(format!("{SNE_PREFIX}.ln"), channels, 1),
            mlp: Mlp::new(format!("{SNE_PREFIX}.mlp"), channels, SNE_RATIO),
        }
    }

    /// The output layer starts at zero so stage two begins as a pass-through.
    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit) -> Result<()> {
        self.ln.init(store)?;
        self.mlp.init(store, init, true)
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array4<T>) -> Result<(Array4<T>, SneCache<T>)> {
        let (n, h, w, c) = x.dim();
        if h * w == 0 {
            return Err(shape_err!("secondary extractor needs a non-empty spatial extent"));
        }
        if c != self.channels {
            return Err(shape_err!("secondary extractor expects {} channels, got {c}", self.channels));
        }
        let flat = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, h * w, c))
            .expect("standard layout");
        let (normed, ln) = self.ln.forward(store, flat.into_dyn())?;
        let normed = normed
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, h, w, c))
            .expect("standard layout");
        let (y, mlp) = self.mlp.forward(store, &normed)?;
        Ok((y, SneCache { ln, normed, mlp }))
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, cache: &SneCache<T>, dy: &Array4<T>) -> Result<Array4<T>> {
        let (n, h, w, c) = dy.dim();
        let dnormed = self.mlp.backward(store, &cache.normed, &cache.mlp, dy)?;
        let flat = dnormed.into_shape_with_order((n, h * w, c)).expect("standard layout");
        let dx = self.ln.backward(store, &cache.ln, flat.into_dyn())?;
        Ok(dx
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, h, w, c))
            .expect("standard layout"))
    }
}
