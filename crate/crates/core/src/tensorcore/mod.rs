//! Differentiable operators with explicit forward/backward pairs.
//!
//! Forward functions return their output together with whatever cache the
//! matching backward needs; backward functions return gradients for every
//! operand. All feature maps are NHWC.

mod adam;
mod attention;
mod conv;
mod deform;
pub mod gradcheck;
mod init;
mod linear;
mod norm;
mod real;
mod store;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use attention::{relative_index, window_msa, window_msa_backward, MsaCache, MsaGrads, MsaParams};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads};
pub use deform::{deform_conv2d, deform_conv2d_backward, DeformGrads};
pub use linear::{
    leaky_relu, leaky_relu_backward, linear, linear_backward, mlp, mlp_backward, LinearGrads, MlpCache, MlpGrads,
    MlpParams, LEAKY_SLOPE,
};
pub use norm::{layer_norm, layer_norm_backward, LayerNormCache, LayerNormGrads, LN_EPS};
pub use init::ParamInit;
pub use real::{Dtype, Real};
pub use store::{Param, ParamStore};

use ndarray::{Array2, Array4, ArrayView4, CowArray, Ix2};

/// Views an NHWC map as `[N*H*W, C]` rows, copying only if not contiguous.
pub fn as_rows<T: Real>(x: &Array4<T>) -> CowArray<'_, T, Ix2> {
    let (n, h, w, c) = x.dim();
    x.as_standard_layout()
        .into_shape_with_order((n * h * w, c))
        .expect("standard layout reshapes")
}

/// Inverse of [`as_rows`].
pub fn from_rows<T: Real>(rows: Array2<T>, n: usize, h: usize, w: usize) -> Array4<T> {
    let c = rows.ncols();
    rows.as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, h, w, c))
        .expect("row count matches geometry")
}

/// Row-major version of a matrix product, which ndarray may return
/// column-major.
pub(crate) fn c_order<T: Real>(a: Array2<T>) -> Array2<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Owned standard-layout copy if needed.
pub fn standard<T: Real>(x: ArrayView4<'_, T>) -> Array4<T> {
    x.as_standard_layout().into_owned()
}
