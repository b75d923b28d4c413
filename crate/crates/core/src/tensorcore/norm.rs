use ndarray::{ArrayD, ArrayView1, ArrayViewD, Axis, Ix2};

use super::Real;
use crate::error::Result;

pub const LN_EPS: f64 = 1e-5;

/// Saved activations of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    pub axis: usize,
    /// Normalized input before the affine transform.
    pub xhat: ArrayD<T>,
    /// `1 / sqrt(var + eps)`, reduced axis kept with extent 1.
    pub inv_std: ArrayD<T>,
}

fn check<T>(x: &ArrayViewD<'_, T>, axis: usize, gain: &ArrayView1<'_, T>, shift: &ArrayView1<'_, T>) -> Result<usize> {
    let nd = x.ndim();
    if axis >= nd {
        return Err(shape_err!("normalized axis {axis} out of range for {nd}-d input"));
    }
    let c = x.shape()[nd - 1];
    if gain.len() != c || shift.len() != c {
        return Err(shape_err!(
            "affine parameters must match the channel axis ({c}), got gain {} shift {}",
            gain.len(),
            shift.len()
        ));
    }
    if x.shape()[axis] == 0 {
        return Err(shape_err!("cannot normalize over an empty axis"));
    }
    Ok(c)
}

/// Layer normalization over `axis`, with a per-channel affine transform
/// indexed by the last axis.
///
/// With `axis` equal to the last axis this is the usual token-wise LayerNorm;
/// with a spatial axis every channel is standardized over its positions.
pub fn layer_norm<T: Real>(
    x: ArrayViewD<'_, T>,
    axis: usize,
    gain: ArrayView1<'_, T>,
    shift: ArrayView1<'_, T>,
) -> Result<(ArrayD<T>, LayerNormCache<T>)> {
    check(&x, axis, &gain, &shift)?;
    let ax = Axis(axis);
    let mean = x.mean_axis(ax).expect("non-empty axis").insert_axis(ax);
    let centered = &x - &mean;
    let var = centered
        .mapv(|v| v * v)
        .mean_axis(ax)
        .expect("non-empty axis")
        .insert_axis(ax);
    let eps = T::lit(LN_EPS);
    let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
    let xhat = centered * &inv_std;
    let y = &xhat * &gain + &shift;
    Ok((y, LayerNormCache { axis, xhat, inv_std }))
}

#[derive(Debug, Clone)]
pub struct LayerNormGrads<T> {
    pub dx: ArrayD<T>,
    pub dgain: ndarray::Array1<T>,
    pub dshift: ndarray::Array1<T>,
}

pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gain: ArrayView1<'_, T>,
    dy: ArrayViewD<'_, T>,
) -> Result<LayerNormGrads<T>> {
    if dy.shape() != cache.xhat.shape() {
        return Err(shape_err!("upstream gradient {:?} vs input {:?}", dy.shape(), cache.xhat.shape()));
    }
    let c = gain.len();
    let ax = Axis(cache.axis);
    let prod = &dy * &cache.xhat;
    let rows = |a: ArrayViewD<'_, T>| {
        let n = a.len() / c;
        a.as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, c))
            .expect("row view")
            .into_dimensionality::<Ix2>()
            .expect("2-d")
            .sum_axis(Axis(0))
    };
    let dgain = rows(prod.view());
    let dshift = rows(dy.view());

    let dxhat = &dy * &gain;
    let m1 = dxhat.mean_axis(ax).expect("non-empty").insert_axis(ax);
    let m2 = (&dxhat * &cache.xhat)
        .mean_axis(ax)
        .expect("non-empty")
        .insert_axis(ax);
    let dx = (dxhat - &m1 - &cache.xhat * &m2) * &cache.inv_std;
    Ok(LayerNormGrads { dx, dgain, dshift })
}
