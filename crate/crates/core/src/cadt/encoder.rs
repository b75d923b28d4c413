//! Global branch: pre-norm window-attention transformer encoder.
//!
//! ```text
//! E'  = MSA(LN1(E)) + E
//! out = MLP(LN2(E')) + E'
//! ```

use ndarray::{Array1, Array4};

use super::layers::{Mlp, Norm};
use crate::error::Result;
use crate::tensorcore::{
    window_msa, window_msa_backward, LayerNormCache, MlpCache, MsaCache, MsaParams, ParamInit, ParamStore, Real,
};

#[derive(Debug, Clone)]
pub struct Encoder {
    pub prefix: String,
    pub dim: usize,
    pub window: usize,
    pub heads: usize,
    pub ln1: Norm,
    pub ln2: Norm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct EncoderCache<T> {
    ln1: LayerNormCache<T>,
    ln1_out: Array4<T>,
    msa: MsaCache<T>,
    ln2: LayerNormCache<T>,
    ln2_out: Array4<T>,
    mlp: MlpCache<T>,
}

/// Relative-position bias init scale.
const BIAS_STD: f64 = 0.02;

impl Encoder {
    pub fn new(prefix: impl Into<String>, dim: usize, window: usize, heads: usize, mlp_ratio: usize) -> Self {
        let prefix = prefix.into();
        Self {
            ln1: Norm::new(format!("{prefix}.ln1"), dim, 3),
            ln2: Norm::new(format!("{prefix}.ln2"), dim, 3),
            mlp: Mlp::new(format!("{prefix}.mlp"), dim, mlp_ratio),
            prefix,
            dim,
            window,
            heads,
        }
    }

    fn name(&self, p: &str) -> String {
        format!("{}.msa.{p}", self.prefix)
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit) -> Result<()> {
        let c = self.dim;
        let span = 2 * self.window - 1;
        let bound = 1.0 / (c as f64).sqrt();
        self.ln1.init(store)?;
        store.insert(self.name("qkv_w"), init.uniform::<T, _>(&self.name("qkv_w"), (c, 3 * c), bound))?;
        store.insert(self.name("qkv_b"), Array1::<T>::zeros(3 * c))?;
        store.insert(self.name("proj_w"), init.uniform::<T, _>(&self.name("proj_w"), (c, c), bound))?;
        store.insert(self.name("proj_b"), Array1::<T>::zeros(c))?;
        store.insert(
            self.name("rel_bias"),
            init.normal::<T, _>(&self.name("rel_bias"), (span * span, self.heads), BIAS_STD),
        )?;
        self.ln2.init(store)?;
        self.mlp.init(store, init, false)
    }

    fn msa_params<'a, T: Real>(&self, store: &'a ParamStore<T>) -> Result<MsaParams<'a, T>> {
        Ok(MsaParams {
            qkv_w: store.v2(&self.name("qkv_w"))?,
            qkv_b: store.v1(&self.name("qkv_b"))?,
            proj_w: store.v2(&self.name("proj_w"))?,
            proj_b: store.v1(&self.name("proj_b"))?,
            rel_bias: store.v2(&self.name("rel_bias"))?,
        })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, e: &Array4<T>) -> Result<(Array4<T>, EncoderCache<T>)> {
        let (ln1_out, ln1) = self.ln1.forward4(store, e)?;
        let (attn, msa) = window_msa(ln1_out.view(), &self.msa_params(store)?, self.window, self.heads)?;
        let mid = attn + e;
        let (ln2_out, ln2) = self.ln2.forward4(store, &mid)?;
        let (m, mlp) = self.mlp.forward(store, &ln2_out)?;
        let out = m + &mid;
        Ok((
            out,
            EncoderCache {
                ln1,
                ln1_out,
                msa,

                ln2,
                ln2_out,
                mlp,
            },
        ))
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, cache: &EncoderCache<T>, dout: &Array4<T>) -> Result<Array4<T>> {
        let dln2_out = self.mlp.backward(store, &cache.ln2_out, &cache.mlp, dout)?;
        let dmid = self.ln2.backward4(store, &cache.ln2, &dln2_out)? + dout;
        let g = window_msa_backward(
            cache.ln1_out.view(),
            &self.msa_params(store)?,
            self.window,
            self.heads,
            &cache.msa,
            dmid.view(),
        )?;
        store.accumulate(&self.name("qkv_w"), g.dqkv_w)?;
        store.accumulate(&self.name("qkv_b"), g.dqkv_b)?;
        store.accumulate(&self.name("proj_w"), g.dproj_w)?;
        store.accumulate(&self.name("proj_b"), g.dproj_b)?;
        store.accumulate(&self.name("rel_bias"), g.drel_bias)?;
        let de = self.ln1.backward4(store, &cache.ln1, &g.dx)? + dmid;
        Ok(de)
    }

    /// Zeroes every projection, MLP weight and bias of this encoder.
    pub fn zero_residual_weights<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for p in ["qkv_w", "qkv_b", "proj_w", "proj_b", "rel_bias"] {
            store.value_mut(&self.name(p))?.fill(T::zero());
        }
        for p in ["w1", "b1", "w2", "b2"] {
            store.value_mut(&format!("{}.{p}", self.mlp.prefix))?.fill(T::zero());
        }
        Ok(())
    }
}

/// Attention rows of the last forward, for inspection in tests.
pub fn attention_weights<T: Real>(cache: &EncoderCache<T>) -> &ndarray::Array4<T> {
    &cache.msa.attn
}
