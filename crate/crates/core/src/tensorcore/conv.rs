//! Zero-padded 2-D convolution over NHWC arrays, lowered to a GEMM through
//! im2col. Weights are laid out `[kh, kw, c_in, c_out]`.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayView4, Axis};

use super::Real;
use crate::error::Result;

/// Output geometry of a same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Geometry {
    pub fn new(x: (usize, usize, usize, usize), wt: (usize, usize, usize, usize), stride: usize) -> Result<Self> {
        let (n, h, w, cin) = x;
        let (kh, kw, wcin, cout) = wt;
        if stride == 0 {
            return Err(shape_err!("stride must be positive"));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err!("kernel {kh}x{kw} must have odd extents"));
        }
        if wcin != cin {
            return Err(shape_err!("input has {cin} channels, kernel expects {wcin}"));
        }
        if n == 0 || h == 0 || w == 0 || cout == 0 {
            return Err(shape_err!("empty convolution operand"));
        }
        let (pad_h, pad_w) = (kh / 2, kw / 2);
        let ho = (h + 2 * pad_h - kh) / stride + 1;
        let wo = (w + 2 * pad_w - kw) / stride + 1;
        Ok(Self {
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_h,
            pad_w,
            ho,
            wo,
        })
    }

    pub fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }

    pub fn taps(&self) -> usize {
        self.kh * self.kw
    }

    pub fn col_width(&self) -> usize {
        self.taps() * self.cin
    }
}

pub(crate) fn check_bias<T>(b: Option<&ArrayView1<'_, T>>, cout: usize) -> Result<()> {
    if let Some(b) = b {
        if b.len() != cout {
            return Err(shape_err!("bias has {} entries, expected {cout}", b.len()));
        }
    }
    Ok(())
}

fn im2col<T: Real>(x: &[T], g: &Geometry) -> Array2<T> {
    let k = g.col_width();
    let mut cols = vec![T::zero(); g.rows() * k];
    for n in 0..g.n {
        let xn = &x[n * g.h * g.w * g.cin..(n + 1) * g.h * g.w * g.cin];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = ((n * g.ho + oy) * g.wo + ox) * k;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let src = (iy as usize * g.w + ix as usize) * g.cin;
                        let dst = row + (ky * g.kw + kx) * g.cin;
                        cols[dst..dst + g.cin].copy_from_slice(&xn[src..src + g.cin]);
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((g.rows(), k), cols).expect("im2col shape")
}

fn col2im<T: Real>(cols: &[T], g: &Geometry) -> Array4<T> {
    let k = g.col_width();
    let mut dx = vec![T::zero(); g.n * g.h * g.w * g.cin];
    for n in 0..g.n {
        let dxn = &mut dx[n * g.h * g.w * g.cin..(n + 1) * g.h * g.w * g.cin];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = ((n * g.ho + oy) * g.wo + ox) * k;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let dst = (iy as usize * g.w + ix as usize) * g.cin;
                        let src = row + (ky * g.kw + kx) * g.cin;
                        for (d, s) in dxn[dst..dst + g.cin].iter_mut().zip(&cols[src..src + g.cin]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec((g.n, g.h, g.w, g.cin), dx).expect("col2im shape")
}

pub(crate) fn weight_matrix<'a, T: Real>(w: ArrayView4<'a, T>, g: &Geometry) -> ArrayView2<'a, T> {
    w.into_shape_with_order((g.col_width(), g.cout))
        .expect("weights are contiguous")
}

pub(crate) fn contiguous<'a, T: Real>(x: &'a ArrayView4<'_, T>) -> std::borrow::Cow<'a, [T]> {
    match x.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(x.iter().copied().collect()),
    }
}

/// Applies the column matrix to the weights and adds the bias.
pub(crate) fn project<T: Real>(
    cols: &Array2<T>,
    wmat: &ArrayView2<'_, T>,
    b: Option<&ArrayView1<'_, T>>,
    g: &Geometry,
) -> Array4<T> {
    let mut y = super::c_order(cols.dot(wmat));
    if let Some(b) = b {
        y += b;
    }
    y.into_shape_with_order((g.n, g.ho, g.wo, g.cout)).expect("conv output shape")
}

/// Forward convolution with zero padding `k / 2`; stride 1 preserves `H x W`.
pub fn conv2d<T: Real>(
    x: ArrayView4<'_, T>,
    w: ArrayView4<'_, T>,
    b: Option<ArrayView1<'_, T>>,
    stride: usize,
) -> Result<Array4<T>> {
    let g = Geometry::new(x.dim(), w.dim(), stride)?;
    check_bias(b.as_ref(), g.cout)?;
    let w = w.as_standard_layout();
    let cols = im2col(&contiguous(&x), &g);
    Ok(project(&cols, &weight_matrix(w.view(), &g), b.as_ref(), &g))
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub dx: Array4<T>,
    pub dw: Array4<T>,
    pub db: Array1<T>,
}

pub fn conv2d_backward<T: Real>(
    x: ArrayView4<'_, T>,
    w: ArrayView4<'_, T>,
    stride: usize,
    dy: ArrayView4<'_, T>,
) -> Result<Conv2dGrads<T>> {
    let g = Geometry::new(x.dim(), w.dim(), stride)?;
    if dy.dim() != (g.n, g.ho, g.wo, g.cout) {
        return Err(shape_err!("upstream gradient {:?} does not match conv output", dy.dim()));
    }
    let w = w.as_standard_layout();
    let wmat = weight_matrix(w.view(), &g);
    let cols = im2col(&contiguous(&x), &g);
    let dy = dy.as_standard_layout();
    let dy2 = dy
        .view()
        .into_shape_with_order((g.rows(), g.cout))
        .expect("dy contiguous");
    let dw = super::c_order(cols.t().dot(&dy2))
        .into_shape_with_order((g.kh, g.kw, g.cin, g.cout))
        .expect("dw shape");
    let db = dy2.sum_axis(Axis(0));
    let dcols = super::c_order(dy2.dot(&wmat.t()));
    let dx = col2im(dcols.as_slice().expect("dcols contiguous"), &g);
    Ok(Conv2dGrads { dx, dw, db })
}
