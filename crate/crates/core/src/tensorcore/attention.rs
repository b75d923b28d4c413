//! Window-based multi-head self-attention over NHWC feature maps.
//!
//! Tokens are pixels. Attention is computed independently inside each
//! non-overlapping `window x window` tile, with a learnable relative-position
//! bias table of shape `[(2w - 1)^2, heads]` added to the logits.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayView4, Axis};

use super::{c_order, Real};
use crate::error::{Error, Result};

/// Projection weights of one attention block. `qkv_w` is `[C, 3C]` with the
/// query, key and value blocks side by side; `proj_w` is `[C, C]`.
#[derive(Debug, Clone, Copy)]
pub struct MsaParams<'a, T> {
    pub qkv_w: ArrayView2<'a, T>,
    pub qkv_b: ArrayView1<'a, T>,
    pub proj_w: ArrayView2<'a, T>,
    pub proj_b: ArrayView1<'a, T>,
    pub rel_bias: ArrayView2<'a, T>,
}

#[derive(Debug, Clone)]
pub struct MsaCache<T> {
    pub qkv: Array2<T>,
    /// Softmax weights, `[windows, heads, tokens, tokens]`.
    pub attn: Array4<T>,
    pub mixed: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct MsaGrads<T> {
    pub dx: Array4<T>,
    pub dqkv_w: Array2<T>,
    pub dqkv_b: Array1<T>,
    pub dproj_w: Array2<T>,
    pub dproj_b: Array1<T>,
    pub drel_bias: Array2<T>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    win: usize,
    head_dim: usize,
}

impl Layout {
    fn tokens(&self) -> usize {
        self.win * self.win
    }

    fn windows(&self) -> usize {
        self.n * (self.h / self.win) * (self.w / self.win)
    }

    /// Flat row index of every token of window `widx`, in raster order.
    fn window_rows(&self, widx: usize, out: &mut Vec<usize>) {
        let per_row = self.w / self.win;
        let per_img = per_row * (self.h / self.win);
        let n = widx / per_img;
        let wy = (widx % per_img) / per_row;
        let wx = widx % per_row;
        out.clear();
        for ty in 0..self.win {
            for tx in 0..self.win {
                out.push((n * self.h + wy * self.win + ty) * self.w + wx * self.win + tx);
            }
        }
    }
}

/// Relative-position table index for every (query, key) token pair.
pub fn relative_index(win: usize) -> Vec<usize> {
    let t = win * win;
    let span = 2 * win - 1;
    let mut idx = Vec::with_capacity(t * t);
    for i in 0..t {
        let (yi, xi) = (i / win, i % win);
        for j in 0..t {
            let (yj, xj) = (j / win, j % win);
            idx.push((yi + win - 1 - yj) * span + (xi + win - 1 - xj));
        }
    }
    idx
}

fn layout<T>(x: &ArrayView4<'_, T>, p: &MsaParams<'_, T>, win: usize, heads: usize) -> Result<Layout> {
    let (n, h, w, c) = x.dim();
    if win == 0 || heads == 0 {
        return Err(Error::Config("window and heads must be positive".into()));
    }
    if h % win != 0 || w % win != 0 {
        return Err(config_err!("feature map {h}x{w} not divisible by window {win}"));
    }
    if c % heads != 0 {
        return Err(config_err!("{c} channels not divisible by {heads} heads"));
    }
    if p.qkv_w.dim() != (c, 3 * c) || p.qkv_b.len() != 3 * c || p.proj_w.dim() != (c, c) || p.proj_b.len() != c {
        return Err(shape_err!("attention projections inconsistent with {c} channels"));
    }
    let span = 2 * win - 1;
    if p.rel_bias.dim() != (span * span, heads) {
        return Err(shape_err!(
            "relative bias table {:?}, expected {:?}",
            p.rel_bias.dim(),
            (span * span, heads)
        ));
    }
    Ok(Layout {
        n,
        h,
        w,
        c,
        win,
        head_dim: c / heads,
    })
}

fn rows_of<'a, T: Real>(x: &'a ArrayView4<'_, T>) -> std::borrow::Cow<'a, Array2<T>> {
    let (n, h, w, c) = x.dim();
    std::borrow::Cow::Owned(
        x.as_standard_layout()
            .into_owned()
            .into_shape_with_order((n * h * w, c))
            .expect("row layout"),
    )
}

pub fn window_msa<T: Real>(
    x: ArrayView4<'_, T>,
    p: &MsaParams<'_, T>,
    window: usize,
    heads: usize,
) -> Result<(Array4<T>, MsaCache<T>)> {
    let l = layout(&x, p, window, heads)?;
    let xr = rows_of(&x);
    let mut qkv = c_order(xr.dot(&p.qkv_w));
    qkv += &p.qkv_b;

    let t = l.tokens();
    let d = l.head_dim;
    let scale = T::one() / T::from_usize(d).unwrap().sqrt();
    let rel = relative_index(window);
    let mut attn = Array4::<T>::zeros((l.windows(), heads, t, t));
    let mut mixed = Array2::<T>::zeros((l.n * l.h * l.w, l.c));
    let bias = p.rel_bias.as_standard_layout();
    let bias = bias.as_slice().expect("standard layout");
    let qs = qkv.as_slice().expect("standard layout");
    let ms = mixed.as_slice_mut().expect("standard layout");
    let attn_s = attn.as_slice_mut().expect("standard layout");
    let (c3, c) = (3 * l.c, l.c);
    let mut rows = Vec::with_capacity(t);

    for widx in 0..l.windows() {
        l.window_rows(widx, &mut rows);
        for head in 0..heads {
            let (qo, ko, vo) = (head * d, c + head * d, 2 * c + head * d);
            let a = &mut attn_s[(widx * heads + head) * t * t..(widx * heads + head + 1) * t * t];
            for i in 0..t {
                let q = &qs[rows[i] * c3 + qo..rows[i] * c3 + qo + d];
                let ai = &mut a[i * t..(i + 1) * t];
                let mut mx = T::neg_infinity();
                for j in 0..t {
                    let k = &qs[rows[j] * c3 + ko..rows[j] * c3 + ko + d];
                    let dot = q.iter().zip(k).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                    let v = dot * scale + bias[rel[i * t + j] * heads + head];
                    ai[j] = v;
                    if v > mx {
                        mx = v;
                    }
                }
                let mut z = T::zero();
                for v in ai.iter_mut() {
                    *v = (*v - mx).exp();
                    z += *v;
                }
                let inv = T::one() / z;
                for v in ai.iter_mut() {
                    *v *= inv;
                }
                let out = &mut ms[rows[i] * c + qo..rows[i] * c + qo + d];
                for j in 0..t {
                    let aij = ai[j];
                    let v = &qs[rows[j] * c3 + vo..rows[j] * c3 + vo + d];
                    for (o, &vv) in out.iter_mut().zip(v) {
                        *o += aij * vv;
                    }
                }
            }
        }
    }

    let mut y = c_order(mixed.dot(&p.proj_w));
    y += &p.proj_b;
    let y = y.into_shape_with_order((l.n, l.h, l.w, l.c)).expect("output shape");
    Ok((y, MsaCache { qkv, attn, mixed }))
}

pub fn window_msa_backward<T: Real>(
    x: ArrayView4<'_, T>,
    p: &MsaParams<'_, T>,
    window: usize,
    heads: usize,
    cache: &MsaCache<T>,
    dy: ArrayView4<'_, T>,
) -> Result<MsaGrads<T>> {
    let l = layout(&x, p, window, heads)?;
    if dy.dim() != x.dim() {
        return Err(shape_err!("upstream gradient {:?} vs input {:?}", dy.dim(), x.dim()));
    }
    let m = l.n * l.h * l.w;
    let dyr = dy
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((m, l.c))
        .expect("row layout");
    let dproj_w = cache.mixed.t().dot(&dyr);
    let dproj_b = dyr.sum_axis(Axis(0));
    let dmixed = c_order(dyr.dot(&p.proj_w.t()));

    let t = l.tokens();
    let d = l.head_dim;
    let scale = T::one() / T::from_usize(d).unwrap().sqrt();
    let rel = relative_index(window);
    let qs = cache.qkv.as_slice().expect("standard layout");
    let attn_s = cache.attn.as_slice().expect("standard layout");
    let gs = dmixed.as_slice().expect("standard layout");
    let mut dqkv = Array2::<T>::zeros((m, 3 * l.c));
    let mut drel = Array2::<T>::zeros(p.rel_bias.raw_dim());
    let dq = dqkv.as_slice_mut().expect("standard layout");
    let dr = drel.as_slice_mut().expect("standard layout");
    let (c3, c) = (3 * l.c, l.c);
    let mut rows = Vec::with_capacity(t);
    let mut da = vec![T::zero(); t];

    for widx in 0..l.windows() {
        l.window_rows(widx, &mut rows);
        for head in 0..heads {
            let (qo, ko, vo) = (head * d, c + head * d, 2 * c + head * d);
            let a = &attn_s[(widx * heads + head) * t * t..(widx * heads + head + 1) * t * t];
            for i in 0..t {
                let ai = &a[i * t..(i + 1) * t];
                let g = &gs[rows[i] * c + qo..rows[i] * c + qo + d];
                // dA_ij = <dO_i, v_j>;  dv_j += a_ij dO_i
                let mut rowdot = T::zero();
                for j in 0..t {
                    let rj = rows[j] * c3;
                    let v = &qs[rj + vo..rj + vo + d];
                    let s = g.iter().zip(v).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                    da[j] = s;
                    rowdot += ai[j] * s;
                    let aij = ai[j];
                    for (dv, &gg) in dq[rj + vo..rj + vo + d].iter_mut().zip(g) {
                        *dv += aij * gg;
                    }
                }
                let ri = rows[i] * c3;
                for j in 0..t {
                    let dl = ai[j] * (da[j] - rowdot);
                    dr[rel[i * t + j] * heads + head] += dl;
                    let ds = dl * scale;
                    let rj = rows[j] * c3;
                    for e in 0..d {
                        let kj = qs[rj + ko + e];
                        let qi = qs[ri + qo + e];
                        dq[ri + qo + e] += ds * kj;
                        dq[rj + ko + e] += ds * qi;
                    }
                }
            }
        }
    }

    let xr = rows_of(&x);
    let dqkv_w = xr.t().dot(&dqkv);
    let dqkv_b = dqkv.sum_axis(Axis(0));
    let dx = c_order(dqkv.dot(&p.qkv_w.t()))
        .into_shape_with_order((l.n, l.h, l.w, l.c))
        .expect("dx shape");
    Ok(MsaGrads {
        dx,
        dqkv_w,
        dqkv_b,
        dproj_w,
        dproj_b,
        drel_bias: drel,
    })
}
