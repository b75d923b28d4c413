//! Local branch: layer norm followed by a narrow convolutional bottleneck
//! with two deformable stages.
//!
//! ```text
//! C --reduce--> C/8 --conv+act--> C/4 --deform+act--> C/4 --deform+act--> C/2 --expand--> C
//! ```

use ndarray::Array4;

use super::layers::{Conv, Deform, DeformCache, Norm};
use crate::error::Result;
use crate::tensorcore::{leaky_relu, leaky_relu_backward, LayerNormCache, ParamInit, ParamStore, Real, LEAKY_SLOPE};

#[derive(Debug, Clone)]
pub struct Lfe {
    pub prefix: String,
    pub dim: usize,
    pub ln: Norm,
    pub reduce: Conv,
    pub mid: Conv,
    pub deform1: Deform,
    pub deform2: Deform,
    pub expand: Conv,
}

/// Intermediate activations; `f_reduction`, `f_local` and `f_expansion` are
/// the bottleneck input, the output of the deformable stages and the branch
/// output.
#[derive(Debug, Clone)]
pub struct LfeCache<T> {
    ln: LayerNormCache<T>,
    normed: Array4<T>,
    pub f_reduction: Array4<T>,
    mid_pre: Array4<T>,
    mid_act: Array4<T>,
    d1_pre: Array4<T>,
    d1_act: Array4<T>,
    d1: DeformCache<T>,
    d2_pre: Array4<T>,
    pub f_local: Array4<T>,
    d2: DeformCache<T>,
    pub f_expansion: Array4<T>,
}

impl Lfe {
    /// Intermediate widths are `dim / 8`, `dim / 4` and `dim / 2`, rounded down.
    pub fn new(prefix: impl Into<String>, dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(config_err!("local branch needs a channel width of at least 8, got {dim}"));
        }
        let prefix = prefix.into();
        Ok(Self {
            ln: Norm::new(format!("{prefix}.ln"), dim, 3),
            reduce: Conv::new(format!("{prefix}.reduce"), dim, dim / 8),
            mid: Conv::new(format!("{prefix}.mid"), dim / 8, dim / 4),
            deform1: Deform::new(&format!("{prefix}.deform1"), dim / 4, dim / 4),
            deform2: Deform::new(&format!("{prefix}.deform2"), dim / 4, dim / 2),
            expand: Conv::new(format!("{prefix}.expand"), dim / 2, dim),
            prefix,
            dim,
        })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit) -> Result<()> {
        self.ln.init(store)?;
        self.reduce.init(store, init, false)?;
        self.mid.init(store, init, false)?;
        self.deform1.init(store, init)?;
        self.deform2.init(store, init)?;
        self.expand.init(store, init, false)
    }

    /// Every convolution of the branch, offset predictors included.
    pub fn convs(&self) -> [&Conv; 7] {
        [
            &self.reduce,
            &self.mid,
            &self.deform1.main,
            &self.deform1.offset,
            &self.deform2.main,
            &self.deform2.offset,
            &self.expand,
        ]
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, e: &Array4<T>) -> Result<(Array4<T>, LfeCache<T>)> {
        let slope = T::lit(LEAKY_SLOPE);
        let (normed, ln) = self.ln.forward4(store, e)?;
        let f_reduction = self.reduce.forward(store, &normed)?;
        let mid_pre = self.mid.forward(store, &f_reduction)?;
        let mid_act = leaky_relu(&mid_pre, slope);
        let (d1_pre, d1) = self.deform1.forward(store, &mid_act)?;
        let d1_act = leaky_relu(&d1_pre, slope);
        let (d2_pre, d2) = self.deform2.forward(store, &d1_act)?;
        let f_local = leaky_relu(&d2_pre, slope);
        let f_expansion = self.expand.forward(store, &f_local)?;
        Ok((
            f_expansion.clone(),
            LfeCache {
                ln,
                normed,
                f_reduction,
                mid_pre,
                mid_act,
                d1_pre,
                d1_act,
                d1,
                d2_pre,
                f_local,
                d2,
                f_expansion,
            },
        ))
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, c: &LfeCache<T>, dout: &Array4<T>) -> Result<Array4<T>> {
        let slope = T::lit(LEAKY_SLOPE);
        let d = self.expand.backward(store, &c.f_local, dout)?;
        let d = leaky_relu_backward(&c.d2_pre, slope, &d);
        let d = self.deform2.backward(store, &c.d1_act, &c.d2, &d)?;
        let d = leaky_relu_backward(&c.d1_pre, slope, &d);
        let d = self.deform1.backward(store, &c.mid_act, &c.d1, &d)?;
        let d = leaky_relu_backward(&c.mid_pre, slope, &d);
        let d = self.mid.backward(store, &c.f_reduction, &d)?;
        let d = self.reduce.backward(store, &c.normed, &d)?;
        self.ln.backward4(store, &c.ln, &d)
    }
}
