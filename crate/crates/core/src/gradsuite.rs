//! Finite-difference checks of every differentiable building block at
//! 64-bit precision, each driven by a seed that fixes inputs, parameters and
//! the output cotangent.

use ndarray::{Array, ArrayD, Dimension, IxDyn, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cadt::{CadtStack, Encoder, Lfe, StackConfig};
use crate::error::Result;
use crate::imagepipe::ColorSpace;
use crate::model::{Denoiser, ModelConfig};
use crate::sne::Sne;
use crate::tensorcore::gradcheck::{grad_check_weighted, FnOp, GradCheckReport, ModuleOp};
use crate::tensorcore::{
    conv2d, conv2d_backward, deform_conv2d, deform_conv2d_backward, layer_norm, layer_norm_backward, mlp, mlp_backward,
    window_msa, window_msa_backward, MlpParams, MsaParams, ParamInit, ParamStore, LEAKY_SLOPE,
};

/// Finite-difference step.
pub const EPS: f64 = 1e-6;
/// Largest accepted relative error.
pub const TOL: f64 = 1e-4;

/// Smallest distance of a deformable sample from an integer coordinate.
const KINK_MARGIN: f64 = 1e-3;

/// Operators covered by [`check`].
pub const OPERATORS: [&str; 8] = [
    "conv2d",
    "deform_conv2d",
    "layer_norm",
    "window_msa",
    "mlp",
    "lfe",
    "encoder",
    "sne",
];

fn rand_array<Sh: ShapeBuilder>(rng: &mut ChaCha8Rng, shape: Sh, bound: f64) -> Array<f64, Sh::Dim>
where
    Sh::Dim: Dimension,
{
    Array::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
}

fn dyn_rand(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> ArrayD<f64> {
    rand_array(rng, IxDyn(shape), bound)
}

/// Replaces every parameter by a random value so that no zero-initialized
/// layer hides a gradient path.
fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, bound: f64) {
    for (name, p) in store.iter_mut() {
        let gain = name.ends_with(".gain");
        p.value.mapv_inplace(|_| {
            let r = rng.random_range(-bound..bound);
            if gain {
                1.0 + r
            } else {
                r
            }
        });
    }
}

fn run_module<F, B>(op: ModuleOp<F, B>, x: ArrayD<f64>, out_shape: &[usize], rng: &mut ChaCha8Rng) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>, &ArrayD<f64>) -> Result<ArrayD<f64>>,
    B: Fn(&mut ParamStore<f64>, &ArrayD<f64>, &ArrayD<f64>) -> Result<ArrayD<f64>>,
{
    let cot = dyn_rand(rng, out_shape, 1.0);
    let inputs = op.inputs(&x);
    grad_check_weighted(&op, &inputs, &cot, EPS, TOL)
}

fn to4(a: &ArrayD<f64>) -> ndarray::Array4<f64> {
    a.clone().into_dimensionality().expect("4-d")
}

fn conv_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let stride = if seed % 2 == 0 { 1 } else { 2 };
    let x = dyn_rand(rng, &[2, 5, 5, 3], 1.0);
    let w = dyn_rand(rng, &[3, 3, 3, 4], 0.5);
    let b = dyn_rand(rng, &[4], 0.5);
    let op = FnOp {
        forward: move |xs: &[ArrayD<f64>]| {
            let b = xs[2].view().into_dimensionality().expect("1-d");
            Ok(conv2d(to4(&xs[0]).view(), to4(&xs[1]).view(), Some(b), stride)?.into_dyn())
        },
        backward: move |xs: &[ArrayD<f64>], up: &ArrayD<f64>| {
            let g = conv2d_backward(to4(&xs[0]).view(), to4(&xs[1]).view(), stride, to4(up).view())?;
            Ok(vec![g.dx.into_dyn(), g.dw.into_dyn(), g.db.into_dyn()])
        },
    };
    let out = (op.forward)(&[x.clone(), w.clone(), b.clone()])?;
    let cot = dyn_rand(rng, out.shape(), 1.0);
    grad_check_weighted(&op, &[x, w, b], &cot, EPS, TOL)
}

fn deform_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = dyn_rand(rng, &[1, 5, 5, 3], 1.0);
    let w = dyn_rand(rng, &[3, 3, 3, 2], 0.5);
    let b = dyn_rand(rng, &[2], 0.5);
    // bilinear sampling has kinks at integer coordinates; keep clear of them
    let off = dyn_rand(rng, &[1, 5, 5, 18], 1.5).mapv(|o| {
        let r = o.round();
        if (o - r).abs() < KINK_MARGIN {
            r + KINK_MARGIN.copysign(o - r)
        } else {
            o
        }
    });
    let op = FnOp {
        forward: |xs: &[ArrayD<f64>]| {
            let b = xs[2].view().into_dimensionality().expect("1-d");
            Ok(deform_conv2d(to4(&xs[0]).view(), to4(&xs[1]).view(), Some(b), to4(&xs[3]).view())?.into_dyn())
        },
        backward: |xs: &[ArrayD<f64>], up: &ArrayD<f64>| {
            let g = deform_conv2d_backward(to4(&xs[0]).view(), to4(&xs[1]).view(), to4(&xs[3]).view(), to4(up).view())?;
            Ok(vec![g.dx.into_dyn(), g.dw.into_dyn(), g.db.into_dyn(), g.doffsets.into_dyn()])
        },
    };
    let cot = dyn_rand(rng, &[1, 5, 5, 2], 1.0);
    grad_check_weighted(&op, &[x, w, b, off], &cot, EPS, TOL)
}

fn layer_norm_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let axis = (seed % 4) as usize;
    let x = dyn_rand(rng, &[2, 3, 4, 5], 2.0);
    let g = dyn_rand(rng, &[5], 1.0);
    let s = dyn_rand(rng, &[5], 1.0);
    let op = FnOp {
        forward: move |xs: &[ArrayD<f64>]| {
            let (y, _) = layer_norm(
                xs[0].view(),
                axis,
                xs[1].view().into_dimensionality().expect("1-d"),
                xs[2].view().into_dimensionality().expect("1-d"),
            )?;
            Ok(y)
        },
        backward: move |xs: &[ArrayD<f64>], up: &ArrayD<f64>| {
            let gain = xs[1].view().into_dimensionality().expect("1-d");
            let (_, cache) = layer_norm(xs[0].view(), axis, gain, xs[2].view().into_dimensionality().expect("1-d"))?;
            let r = layer_norm_backward(&cache, gain, up.view())?;
            Ok(vec![r.dx, r.dgain.into_dyn(), r.dshift.into_dyn()])
        },
    };
    let cot = dyn_rand(rng, &[2, 3, 4, 5], 1.0);
    grad_check_weighted(&op, &[x, g, s], &cot, EPS, TOL)
}

fn msa_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (c, win, heads) = (8, 2, 2);
    let span = 2 * win - 1;
    let inputs = vec![
        dyn_rand(rng, &[1, 4, 4, c], 1.0),
        dyn_rand(rng, &[c, 3 * c], 0.5),
        dyn_rand(rng, &[3 * c], 0.2),
        dyn_rand(rng, &[c, c], 0.5),
        dyn_rand(rng, &[c], 0.2),
        dyn_rand(rng, &[span * span, heads], 0.5),
    ];
    fn params(xs: &[ArrayD<f64>]) -> MsaParams<'_, f64> {
        MsaParams {
            qkv_w: xs[1].view().into_dimensionality().expect("2-d"),
            qkv_b: xs[2].view().into_dimensionality().expect("1-d"),
            proj_w: xs[3].view().into_dimensionality().expect("2-d"),
            proj_b: xs[4].view().into_dimensionality().expect("1-d"),
            rel_bias: xs[5].view().into_dimensionality().expect("2-d"),
        }
    }
    let op = FnOp {
        forward: move |xs: &[ArrayD<f64>]| Ok(window_msa(to4(&xs[0]).view(), &params(xs), win, heads)?.0.into_dyn()),
        backward: move |xs: &[ArrayD<f64>], up: &ArrayD<f64>| {
            let x = to4(&xs[0]);
            let p = params(xs);
            let (_, cache) = window_msa(x.view(), &p, win, heads)?;
            let g = window_msa_backward(x.view(), &p, win, heads, &cache, to4(up).view())?;
            Ok(vec![
                g.dx.into_dyn(),
                g.dqkv_w.into_dyn(),
                g.dqkv_b.into_dyn(),
                g.dproj_w.into_dyn(),
                g.dproj_b.into_dyn(),
                g.drel_bias.into_dyn(),
            ])
        },
    };
    let cot = dyn_rand(rng, &[1, 4, 4, c], 1.0);
    grad_check_weighted(&op, &inputs, &cot, EPS, TOL)
}

fn mlp_case(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (c, ratio) = (4, 2);
    let inputs = vec![
        dyn_rand(rng, &[6, c], 1.0),
        dyn_rand(rng, &[c, c * ratio], 0.7),
        dyn_rand(rng, &[c * ratio], 0.3),
        dyn_rand(rng, &[c * ratio, c], 0.7),
        dyn_rand(rng, &[c], 0.3),
    ];
    fn params(xs: &[ArrayD<f64>]) -> MlpParams<'_, f64> {
        MlpParams {
            w1: xs[1].view().into_dimensionality().expect("2-d"),
            b1: xs[2].view().into_dimensionality().expect("1-d"),
            w2: xs[3].view().into_dimensionality().expect("2-d"),
            b2: xs[4].view().into_dimensionality().expect("1-d"),
        }
    }
    fn x2(a: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
        a.view().into_dimensionality().expect("2-d")
    }
    let op = FnOp {
        forward: move |xs: &[ArrayD<f64>]| Ok(mlp(x2(&xs[0]), &params(xs), ratio, LEAKY_SLOPE)?.0.into_dyn()),
        backward: move |xs: &[ArrayD<f64>], up: &ArrayD<f64>| {
            let p = params(xs);
            let (_, cache) = mlp(x2(&xs[0]), &p, ratio, LEAKY_SLOPE)?;
            let g = mlp_backward(x2(&xs[0]), &p, &cache, LEAKY_SLOPE, x2(up));
            Ok(vec![
                g.dx.into_dyn(),
                g.dw1.into_dyn(),
                g.db1.into_dyn(),
                g.dw2.into_dyn(),
                g.db2.into_dyn(),
            ])
        },
    };
    let cot = dyn_rand(rng, &[6, c], 1.0);
    grad_check_weighted(&op, &inputs, &cot, EPS, TOL)
}

fn lfe_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let lfe = Lfe::new("lfe", 16)?;
    let mut store = ParamStore::new();
    lfe.init(&mut store, &ParamInit::new(seed))?;
    randomize(&mut store, rng, 0.3);
    let x = dyn_rand(rng, &[1, 4, 4, 16], 1.0);
    let (l1, l2) = (lfe.clone(), lfe);
    let op = ModuleOp {
        store,
        forward: move |s: &ParamStore<f64>, x: &ArrayD<f64>| Ok(l1.forward(s, &to4(x))?.0.into_dyn()),
        backward: move |s: &mut ParamStore<f64>, x: &ArrayD<f64>, up: &ArrayD<f64>| {
            let (_, c) = l2.forward(s, &to4(x))?;
            Ok(l2.backward(s, &c, &to4(up))?.into_dyn())
        },
    };
    run_module(op, x, &[1, 4, 4, 16], rng)
}

fn encoder_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let enc = Encoder::new("enc", 8, 2, 2, 2);
    let mut store = ParamStore::new();
    enc.init(&mut store, &ParamInit::new(seed))?;
    randomize(&mut store, rng, 0.4);
    let x = dyn_rand(rng, &[1, 4, 4, 8], 1.0);
    let (e1, e2) = (enc.clone(), enc);
    let op = ModuleOp {
        store,
        forward: move |s: &ParamStore<f64>, x: &ArrayD<f64>| Ok(e1.forward(s, &to4(x))?.0.into_dyn()),
        backward: move |s: &mut ParamStore<f64>, x: &ArrayD<f64>, up: &ArrayD<f64>| {
            let (_, c) = e2.forward(s, &to4(x))?;
            Ok(e2.backward(s, &c, &to4(up))?.into_dyn())
        },
    };
    run_module(op, x, &[1, 4, 4, 8], rng)
}

fn sne_case(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let sne = Sne::new(3);
    let mut store = ParamStore::new();
    sne.init(&mut store, &ParamInit::new(seed))?;
    randomize(&mut store, rng, 0.5);
    let x = dyn_rand(rng, &[1, 4, 4, 3], 1.0);
    let (s1, s2) = (sne.clone(), sne);
    let op = ModuleOp {
        store,
        forward: move |s: &ParamStore<f64>, x: &ArrayD<f64>| Ok(s1.forward(s, &to4(x))?.0.into_dyn()),
        backward: move |s: &mut ParamStore<f64>, x: &ArrayD<f64>, up: &ArrayD<f64>| {
            let (_, c) = s2.forward(s, &to4(x))?;
            Ok(s2.backward(s, &c, &to4(up))?.into_dyn())
        },
    };
    run_module(op, x, &[1, 4, 4, 3], rng)
}

/// Runs the named check for one seed.
pub fn check(operator: &str, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(operator.len() as u64));
    match operator {
        "conv2d" => conv_case(&mut rng, seed),
        "deform_conv2d" => deform_case(&mut rng),
        "layer_norm" => layer_norm_case(&mut rng, seed),
        "window_msa" => msa_case(&mut rng),
        "mlp" => mlp_case(&mut rng),
        "lfe" => lfe_case(&mut rng, seed),
        "encoder" => encoder_case(&mut rng, seed),
        "sne" => sne_case(&mut rng, seed),
        other => Err(config_err!("no gradient check for {other}")),
    }
}

/// Tiny full stack (C = 8, one group of one unit, 4x4 input).
pub fn check_stack(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let cfg = StackConfig {
        groups: 1,
        units_per_group: 1,
        embed_dim: 8,
        window: 2,
        heads: 2,
        mlp_ratio: 2,
        enable_global: true,
        enable_local: true,
        image_channels: 1,
    };
    let stack = CadtStack::new(cfg)?;
    let mut store = ParamStore::new();
    stack.init(&mut store, &ParamInit::new(seed))?;
    randomize(&mut store, &mut rng, 0.3);
    let x = dyn_rand(&mut rng, &[1, 4, 4, 1], 1.0);
    let (a, b) = (stack.clone(), stack);
    let op = ModuleOp {
        store,
        forward: move |s: &ParamStore<f64>, x: &ArrayD<f64>| Ok(a.forward(s, &to4(x))?.0.into_dyn()),
        backward: move |s: &mut ParamStore<f64>, x: &ArrayD<f64>, up: &ArrayD<f64>| {
            let (_, c) = b.forward(s, &to4(x))?;
            Ok(b.backward(s, &c, &to4(up))?.into_dyn())
        },
    };
    run_module(op, x, &[1, 4, 4, 1], &mut rng)
}

/// Whole two-stage network on a blind batch (tiny stack plus SNE).
pub fn check_denoiser(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xde05e);
    let mut cfg = ModelConfig::toy();
    cfg.stack = StackConfig {
        groups: 1,
        units_per_group: 1,
        embed_dim: 8,
        window: 2,
        heads: 2,
        mlp_ratio: 2,
        enable_global: true,
        enable_local: true,
        image_channels: 3,
    };
    cfg.colorspace = ColorSpace::Srgb;
    let net = Denoiser::new(cfg)?;
    let mut store = net.init_params::<f64>(seed)?;
    randomize(&mut store, &mut rng, 0.3);
    let x = dyn_rand(&mut rng, &[2, 4, 4, 3], 1.0);
    let (a, b) = (net.clone(), net);
    let op = ModuleOp {
        store,
        forward: move |s: &ParamStore<f64>, x: &ArrayD<f64>| Ok(a.forward_blind(s, &to4(x))?.stage2.into_dyn()),
        backward: move |s: &mut ParamStore<f64>, x: &ArrayD<f64>, up: &ArrayD<f64>| {
            let f = b.forward_blind(s, &to4(x))?;
            Ok(b.backward_blind(s, &f, &to4(up))?.into_dyn())
        },
    };
    run_module(op, x, &[2, 4, 4, 3], &mut rng)
}
