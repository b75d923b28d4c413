//! Deformable 2-D convolution (stride 1, same padding).
//!
//! Every kernel tap of every output location samples the input at its
//! regular grid position displaced by a learned `(dy, dx)` offset. Samples are
//! bilinear; corners falling outside the image read zero. Offsets are laid out
//! `[n, h, w, 2 * kh * kw]` with tap `t = ky * kw + kx` at channels
//! `(2t, 2t + 1) = (dy, dx)`.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView4, Axis};

use super::conv::{check_bias, contiguous, project, weight_matrix, Geometry};
use super::Real;
use crate::error::Result;

/// Bilinear corner indices and weights for one sample point.
struct Sample<T> {
    y0: isize,
    x0: isize,
    ly: T,
    lx: T,
}

impl<T: Real> Sample<T> {
    fn at(py: T, px: T) -> Self {
        let fy = py.floor();
        let fx = px.floor();
        Self {
            y0: fy.to_isize().unwrap_or(isize::MIN / 2),
            x0: fx.to_isize().unwrap_or(isize::MIN / 2),
            ly: py - fy,
            lx: px - fx,
        }
    }

    /// `(flat pixel index, bilinear weight, d weight / dy, d weight / dx)` for
    /// every in-bounds corner.
    fn corners(&self, h: usize, w: usize) -> impl Iterator<Item = (usize, T, T, T)> + '_ {
        let one = T::one();
        let (hy, hx) = (one - self.ly, one - self.lx);
        let table = [
            (0isize, 0isize, hy * hx, -hx, -hy),
            (0, 1, hy * self.lx, -self.lx, hy),
            (1, 0, self.ly * hx, hx, -self.ly),
            (1, 1, self.ly * self.lx, self.lx, self.ly),
        ];
        table.into_iter().filter_map(move |(dy, dx, wt, gy, gx)| {
            let y = self.y0 + dy;
            let x = self.x0 + dx;
            (y >= 0 && x >= 0 && y < h as isize && x < w as isize).then(|| ((y as usize) * w + x as usize, wt, gy, gx))
        })
    }
}

fn check_offsets<T>(offsets: &ArrayView4<'_, T>, g: &Geometry) -> Result<()> {
    let want = (g.n, g.ho, g.wo, 2 * g.taps());
    if offsets.dim() != want {
        return Err(shape_err!(
            "offsets have shape {:?}, expected {:?} for a {}x{} kernel",
            offsets.dim(),
            want,
            g.kh,
            g.kw
        ));
    }
    Ok(())
}

fn geometry<T>(x: &ArrayView4<'_, T>, w: &ArrayView4<'_, T>) -> Result<Geometry> {
    Geometry::new(x.dim(), w.dim(), 1)
}

#[inline]
fn base(o: usize, k: usize, pad: usize) -> isize {
    o as isize + k as isize - pad as isize
}

fn sampled_columns<T: Real>(x: &[T], off: &[T], g: &Geometry) -> Array2<T> {
    let k = g.col_width();
    let taps = g.taps();
    let mut cols = vec![T::zero(); g.rows() * k];
    let plane = g.h * g.w * g.cin;
    for n in 0..g.n {
        let xn = &x[n * plane..(n + 1) * plane];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let r = (n * g.ho + oy) * g.wo + ox;
                let o = &off[r * 2 * taps..(r + 1) * 2 * taps];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let t = ky * g.kw + kx;
                        let py = T::from_isize(base(oy, ky, g.pad_h)).unwrap() + o[2 * t];
                        let px = T::from_isize(base(ox, kx, g.pad_w)).unwrap() + o[2 * t + 1];
                        let s = Sample::at(py, px);
                        let dst = &mut cols[r * k + t * g.cin..r * k + (t + 1) * g.cin];
                        for (idx, wt, _, _) in s.corners(g.h, g.w) {
                            for (d, v) in dst.iter_mut().zip(&xn[idx * g.cin..(idx + 1) * g.cin]) {
                                *d += wt * *v;
                            }
                        }
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((g.rows(), k), cols).expect("column shape")
}

pub fn deform_conv2d<T: Real>(
    x: ArrayView4<'_, T>,
    w: ArrayView4<'_, T>,
    b: Option<ArrayView1<'_, T>>,
    offsets: ArrayView4<'_, T>,
) -> Result<Array4<T>> {
    let g = geometry(&x, &w)?;
    check_bias(b.as_ref(), g.cout)?;
    check_offsets(&offsets, &g)?;
    let w = w.as_standard_layout();
    let cols = sampled_columns(&contiguous(&x), &contiguous(&offsets), &g);
    Ok(project(&cols, &weight_matrix(w.view(), &g), b.as_ref(), &g))
}

#[derive(Debug, Clone)]
pub struct DeformGrads<T> {
    pub dx: Array4<T>,
    pub dw: Array4<T>,
    pub db: Array1<T>,
    pub doffsets: Array4<T>,
}

pub fn deform_conv2d_backward<T: Real>(
    x: ArrayView4<'_, T>,
    w: ArrayView4<'_, T>,
    offsets: ArrayView4<'_, T>,
    dy: ArrayView4<'_, T>,
) -> Result<DeformGrads<T>> {
    let g = geometry(&x, &w)?;
    check_offsets(&offsets, &g)?;
    if dy.dim() != (g.n, g.ho, g.wo, g.cout) {
        return Err(shape_err!("upstream gradient {:?} does not match output", dy.dim()));
    }
    let xs = contiguous(&x);
    let off = contiguous(&offsets);
    let w = w.as_standard_layout();
    let wmat = weight_matrix(w.view(), &g);
    let cols = sampled_columns(&xs, &off, &g);
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
    let dcols = dcols.as_slice().expect("dcols contiguous");

    let k = g.col_width();
    let taps = g.taps();
    let plane = g.h * g.w * g.cin;
    let mut dx = vec![T::zero(); g.n * plane];
    let mut doff = vec![T::zero(); g.rows() * 2 * taps];
    for n in 0..g.n {
        let xn = &xs[n * plane..(n + 1) * plane];
        let dxn = &mut dx[n * plane..(n + 1) * plane];
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let r = (n * g.ho + oy) * g.wo + ox;
                let o = &off[r * 2 * taps..(r + 1) * 2 * taps];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let t = ky * g.kw + kx;
                        let py = T::from_isize(base(oy, ky, g.pad_h)).unwrap() + o[2 * t];
                        let px = T::from_isize(base(ox, kx, g.pad_w)).unwrap() + o[2 * t + 1];
                        let s = Sample::at(py, px);
                        let gcol = &dcols[r * k + t * g.cin..r * k + (t + 1) * g.cin];
                        let (mut gy, mut gx) = (T::zero(), T::zero());
                        for (idx, wt, dwy, dwx) in s.corners(g.h, g.w) {
                            let xv = &xn[idx * g.cin..(idx + 1) * g.cin];
                            let dxv = &mut dxn[idx * g.cin..(idx + 1) * g.cin];
                            let mut dot = T::zero();
                            for c in 0..g.cin {
                                dxv[c] += wt * gcol[c];
                                dot += gcol[c] * xv[c];
                            }
                            gy += dwy * dot;
                            gx += dwx * dot;
                        }
                        doff[r * 2 * taps + 2 * t] = gy;
                        doff[r * 2 * taps + 2 * t + 1] = gx;
                    }
                }
            }
        }
    }
    Ok(DeformGrads {
        dx: Array4::from_shape_vec((g.n, g.h, g.w, g.cin), dx).expect("dx shape"),
        dw,
        db,
        doffsets: Array4::from_shape_vec((g.n, g.ho, g.wo, 2 * taps), doff).expect("doffsets shape"),
    })
}
