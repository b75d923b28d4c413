use ndarray::Array4;

use super::encoder::{Encoder, EncoderCache};
use super::lfe::{Lfe, LfeCache};
use crate::error::Result;
use crate::tensorcore::{ParamInit, ParamStore, Real};

/// One dual-branch unit. The branches read the same input and their outputs
/// are summed. With the global branch disabled the input is passed through
/// in its place, so the unit stays residual.
#[derive(Debug, Clone)]
pub struct CadtUnit {
    pub prefix: String,
    pub encoder: Option<Encoder>,
    pub lfe: Option<Lfe>,
}

#[derive(Debug, Clone)]
pub struct CadtCache<T> {
    pub encoder: Option<EncoderCache<T>>,
    pub lfe: Option<LfeCache<T>>,
}

impl CadtUnit {
    pub fn new(
        prefix: impl Into<String>,
        dim: usize,
        window: usize,
        heads: usize,
        mlp_ratio: usize,
        enable_global: bool,
        enable_local: bool,
    ) -> Result<Self> {
        let prefix = prefix.into();
        if !enable_global && !enable_local {
            return Err(config_err!("{prefix}: at least one branch must be enabled"));
        }
        let encoder = enable_global.then(|| Encoder::new(format!("{prefix}.global"), dim, window, heads, mlp_ratio));
        let lfe = if enable_local {
            Some(Lfe::new(format!("{prefix}.local"), dim)?)
        } else {
            None
        };
        Ok(Self { prefix, encoder, lfe })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit) -> Result<()> {
        if let Some(e) = &self.encoder {
            e.init(store, init)?;
        }
        if let Some(l) = &self.lfe {
            l.init(store, init)?;
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, e: &Array4<T>) -> Result<(Array4<T>, CadtCache<T>)> {
        let (global, ecache) = match &self.encoder {
            Some(enc) => {
                let (y, c) = enc.forward(store, e)?;
                (y, Some(c))
            }
            None => (e.clone(), None),
        };
        let (out, lcache) = match &self.lfe {
            Some(l) => {
                let (y, c) = l.forward(store, e)?;
                (global + &y, Some(c))
            }
            None => (global, None),
        };
        Ok((
            out,
            CadtCache {
                encoder: ecache,
                lfe: lcache,
            },
        ))
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, cache: &CadtCache<T>, dout: &Array4<T>) -> Result<Array4<T>> {
        let mut de = match (&self.encoder, &cache.encoder) {
            (Some(enc), Some(c)) => enc.backward(store, c, dout)?,
            (None, None) => dout.clone(),
            _ => return Err(crate::Error::State(format!("{}: cache does not match unit", self.prefix))),
        };
        match (&self.lfe, &cache.lfe) {
            (Some(l), Some(c)) => de += &l.backward(store, c, dout)?,
            (None, None) => {}
            _ => return Err(crate::Error::State(format!("{}: cache does not match unit", self.prefix))),
        }
        Ok(de)
    }
}
