//! Named wrappers binding tensorcore operators to entries of a [`ParamStore`].

use ndarray::{Array1, Array2, Array4, ArrayD, Ix4};

use crate::error::Result;
use crate::tensorcore::{
    as_rows, conv2d, conv2d_backward, deform_conv2d, deform_conv2d_backward, from_rows, layer_norm,
    layer_norm_backward, mlp, mlp_backward, LayerNormCache, MlpCache, MlpParams, ParamInit, ParamStore, Real,
};

pub const KERNEL: usize = 3;

/// 3x3 same-padded convolution, parameters `{prefix}.weight` / `{prefix}.bias`.
#[derive(Debug, Clone)]
pub struct Conv {
    pub prefix: String,
    pub cin: usize,
    pub cout: usize,
}

impl Conv {
    pub fn new(prefix: impl Into<String>, cin: usize, cout: usize) -> Self {
        Self {
            prefix: prefix.into(),
            cin,
            cout,
        }
    }

    pub fn weight(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    /// Uniform fan-in init; `zero` gives an all-zero layer.
    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit, zero: bool) -> Result<()> {
        let shape = (KERNEL, KERNEL, self.cin, self.cout);
        let w = if zero {
            Array4::zeros(shape)
        } else {
            let bound = 1.0 / ((KERNEL * KERNEL * self.cin) as f64).sqrt();
            init.uniform(&self.weight(), shape, bound)
        };
        store.insert(self.weight(), w)?;
        store.insert(self.bias(), Array1::<T>::zeros(self.cout))
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array4<T>) -> Result<Array4<T>> {
        conv2d(x.view(), store.v4(&self.weight())?, Some(store.v1(&self.bias())?), 1)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, x: &Array4<T>, dy: &Array4<T>) -> Result<Array4<T>> {
        let g = conv2d_backward(x.view(), store.v4(&self.weight())?, 1, dy.view())?;
        store.accumulate(&self.weight(), g.dw)?;
        store.accumulate(&self.bias(), g.db)?;
        Ok(g.dx)
    }
}

/// Deformable 3x3 convolution whose offsets come from a plain convolution of
/// the same input (`{prefix}.offset.*`, zero-initialized).
#[derive(Debug, Clone)]
pub struct Deform {
    pub main: Conv,
    pub offset: Conv,
}

#[derive(Debug, Clone)]
pub struct DeformCache<T> {
    pub offsets: Array4<T>,
}

impl Deform {
    pub fn new(prefix: &str, cin: usize, cout: usize) -> Self {
        Self {
            main: Conv::new(prefix, cin, cout),
            offset: Conv::new(format!("{prefix}.offset"), cin, 2 * KERNEL * KERNEL),
        }
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit) -> Result<()> {
        self.main.init(store, init, false)?;
        self.offset.init(store, init, true)
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array4<T>) -> Result<(Array4<T>, DeformCache<T>)> {
        let offsets = self.offset.forward(store, x)?;
        let y = deform_conv2d(
            x.view(),
            store.v4(&self.main.weight())?,
            Some(store.v1(&self.main.bias())?),
            offsets.view(),
        )?;
        Ok((y, DeformCache { offsets }))
    }

    pub fn backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        x: &Array4<T>,
        cache: &DeformCache<T>,
        dy: &Array4<T>,
    ) -> Result<Array4<T>> {
        let g = deform_conv2d_backward(x.view(), store.v4(&self.main.weight())?, cache.offsets.view(), dy.view())?;
        store.accumulate(&self.main.weight(), g.dw)?;
        store.accumulate(&self.main.bias(), g.db)?;
        let dx_off = self.offset.backward(store, x, &g.doffsets)?;
        Ok(g.dx + dx_off)
    }
}

/// Layer norm with per-channel gain/shift `{prefix}.gain` / `{prefix}.shift`.
#[derive(Debug, Clone)]
pub struct Norm {
    pub prefix: String,
    pub channels: usize,
    /// Axis reduced over, in the array handed to `forward`.
    pub axis: usize,
}

impl Norm {
    pub fn new(prefix: impl Into<String>, channels: usize, axis: usize) -> Self {
        Self {
            prefix: prefix.into(),
            channels,
            axis,
        }
    }

    pub fn gain(&self) -> String {
        format!("{}.gain", self.prefix)
    }

    pub fn shift(&self) -> String {
        format!("{}.shift", self.prefix)
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        store.insert(self.gain(), Array1::<T>::ones(self.channels))?;
        store.insert(self.shift(), Array1::<T>::zeros(self.channels))
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: ArrayD<T>) -> Result<(ArrayD<T>, LayerNormCache<T>)> {
        layer_norm(x.view(), self.axis, store.v1(&self.gain())?, store.v1(&self.shift())?)
    }

    pub fn forward4<T: Real>(&self, store: &ParamStore<T>, x: &Array4<T>) -> Result<(Array4<T>, LayerNormCache<T>)> {
        let (y, c) = self.forward(store, x.clone().into_dyn())?;
        Ok((y.into_dimensionality::<Ix4>().expect("4-d"), c))
    }

    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, cache: &LayerNormCache<T>, dy: ArrayD<T>) -> Result<ArrayD<T>> {
        let g = layer_norm_backward(cache, store.v1(&self.gain())?, dy.view())?;
        store.accumulate(&self.gain(), g.dgain)?;
        store.accumulate(&self.shift(), g.dshift)?;
        Ok(g.dx)
    }

    pub fn backward4<T: Real>(&self, store: &mut ParamStore<T>, cache: &LayerNormCache<T>, dy: &Array4<T>) -> Result<Array4<T>> {
        Ok(self
            .backward(store, cache, dy.clone().into_dyn())?
            .into_dimensionality::<Ix4>()
            .expect("4-d"))
    }
}

/// Channel MLP `{prefix}.w1/b1/w2/b2` applied at every position.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub prefix: String,
    pub width: usize,
    pub ratio: usize,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, width: usize, ratio: usize) -> Self {
        Self {
            prefix: prefix.into(),
            width,
            ratio,
        }
    }

    fn name(&self, p: &str) -> String {
        format!("{}.{p}", self.prefix)
    }

    /// `zero_out` zero-initializes the second layer.
    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit, zero_out: bool) -> Result<()> {
        let (c, h) = (self.width, self.width * self.ratio);
        store.insert(self.name("w1"), init.uniform::<T, _>(&self.name("w1"), (c, h), 1.0 / (c as f64).sqrt()))?;
        store.insert(self.name("b1"), Array1::<T>::zeros(h))?;
        let w2 = if zero_out {
            Array2::zeros((h, c))
        } else {
            init.uniform::<T, _>(&self.name("w2"), (h, c), 1.0 / (h as f64).sqrt())
        };
        store.insert(self.name("w2"), w2)?;
        store.insert(self.name("b2"), Array1::<T>::zeros(c))
    }

    fn params<'a, T: Real>(&self, store: &'a ParamStore<T>) -> Result<MlpParams<'a, T>> {
        Ok(MlpParams {
            w1: store.v2(&self.name("w1"))?,
            b1: store.v1(&self.name("b1"))?,
            w2: store.v2(&self.name("w2"))?,
            b2: store.v1(&self.name("b2"))?,
        })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array4<T>) -> Result<(Array4<T>, MlpCache<T>)> {
        let (n, h, w, _) = x.dim();
        let (y, cache) = mlp(as_rows(x).view(), &self.params(store)?, self.ratio, T::lit(crate::tensorcore::LEAKY_SLOPE))?;
        Ok((from_rows(y, n, h, w), cache))
    }

    pub fn backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        x: &Array4<T>,
        cache: &MlpCache<T>,
        dy: &Array4<T>,
    ) -> Result<Array4<T>> {
        let (n, h, w, _) = x.dim();
        let g = {
            let p = self.params(store)?;
            mlp_backward(
                as_rows(x).view(),
                &p,
                cache,
                T::lit(crate::tensorcore::LEAKY_SLOPE),
                as_rows(dy).view(),
            )
        };
        store.accumulate(&self.name("w1"), g.dw1)?;
        store.accumulate(&self.name("b1"), g.db1)?;
        store.accumulate(&self.name("w2"), g.dw2)?;
        store.accumulate(&self.name("b2"), g.db2)?;
        Ok(from_rows(g.dx, n, h, w))
    }
}
