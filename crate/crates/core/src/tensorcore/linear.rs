use ndarray::{Array, Array1, Array2, ArrayView1, ArrayView2, Axis, Dimension};

use super::Real;
use crate::error::Result;

/// Negative-side slope shared by every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<T: Real, D: Dimension>(x: &Array<T, D>, slope: T) -> Array<T, D> {
    x.mapv(|v| if v >= T::zero() { v } else { slope * v })
}

/// Backward of [`leaky_relu`] given its *input* `x`.
pub fn leaky_relu_backward<T: Real, D: Dimension>(x: &Array<T, D>, slope: T, dy: &Array<T, D>) -> Array<T, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v < T::zero() {
            *d = *d * slope
        }
    });
    dx
}

/// Row-wise affine map `x · w + b` with `w` shaped `[in, out]`.
pub fn linear<T: Real>(x: ArrayView2<'_, T>, w: ArrayView2<'_, T>, b: Option<ArrayView1<'_, T>>) -> Result<Array2<T>> {
    if x.ncols() != w.nrows() {
        return Err(shape_err!("linear input width {} vs weight rows {}", x.ncols(), w.nrows()));
    }
    let mut y = x.dot(&w);
    if let Some(b) = b {
        if b.len() != w.ncols() {
            return Err(shape_err!("bias length {} vs output width {}", b.len(), w.ncols()));
        }
        y += &b;
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub dx: Array2<T>,
    pub dw: Array2<T>,
    pub db: Array1<T>,
}

pub fn linear_backward<T: Real>(x: ArrayView2<'_, T>, w: ArrayView2<'_, T>, dy: ArrayView2<'_, T>) -> LinearGrads<T> {
    LinearGrads {
        dx: dy.dot(&w.t()),
        dw: x.t().dot(&dy),
        db: dy.sum_axis(Axis(0)),
    }
}

/// Two affine layers with a LeakyReLU between them.
#[derive(Debug, Clone, Copy)]
pub struct MlpParams<'a, T> {
    pub w1: ArrayView2<'a, T>,
    pub b1: ArrayView1<'a, T>,
    pub w2: ArrayView2<'a, T>,
    pub b2: ArrayView1<'a, T>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub pre: Array2<T>,
    pub act: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads<T> {
    pub dx: Array2<T>,
    pub dw1: Array2<T>,
    pub db1: Array1<T>,
    pub dw2: Array2<T>,
    pub db2: Array1<T>,
}

/// Applies the MLP to every row of `x`. The hidden width must be
/// `hidden_ratio` times the input width, and the output width equals the input.
pub fn mlp<T: Real>(x: ArrayView2<'_, T>, p: &MlpParams<'_, T>, hidden_ratio: usize, slope: T) -> Result<(Array2<T>, MlpCache<T>)> {
    let c = x.ncols();
    if p.w1.dim() != (c, hidden_ratio * c) || p.w2.dim() != (hidden_ratio * c, c) {
        return Err(shape_err!(
            "mlp weights {:?} / {:?} inconsistent with width {c} and ratio {hidden_ratio}",
            p.w1.dim(),
            p.w2.dim()
        ));
    }
    let pre = linear(x, p.w1, Some(p.b1))?;
    let act = leaky_relu(&pre, slope);
    let y = linear(act.view(), p.w2, Some(p.b2))?;
    Ok((y, MlpCache { pre, act }))
}

pub fn mlp_backward<T: Real>(
    x: ArrayView2<'_, T>,
    p: &MlpParams<'_, T>,
    cache: &MlpCache<T>,
    slope: T,
    dy: ArrayView2<'_, T>,
) -> MlpGrads<T> {
    let l2 = linear_backward(cache.act.view(), p.w2, dy);
    let dpre = leaky_relu_backward(&cache.pre, slope, &l2.dx);
    let l1 = linear_backward(x, p.w1, dpre.view());
    MlpGrads {
        dx: l1.dx,
        dw1: l1.dw,
        db1: l1.db,
        dw2: l2.dw,
        db2: l2.db,
    }
}
