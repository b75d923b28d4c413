//! Procedural piecewise-smooth greyscale scenes used as clean references for
//! desk-scale experiments.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ColorSpace, ImageSample};

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y <= y1 && x >= x0 && x <= x1,
        }
    }
}

/// A `h x w x 1` scene: shaded background, a handful of overlapping flat or
/// shaded shapes and a faint low-frequency ripple. Values stay in `[0.05, 0.95]`.
pub fn synthetic_scene(h: usize, w: usize, seed: u64) -> ImageSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (h as f64, w as f64);
    let base = rng.random_range(0.2..0.8);
    let gy = rng.random_range(-0.3..0.3);
    let gx = rng.random_range(-0.3..0.3);
    let n_shapes = rng.random_range(4..9);
    let mut shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let shape = if rng.random_bool(0.5) {
            Shape::Ellipse {
                cy: rng.random_range(0.0..hf),
                cx: rng.random_range(0.0..wf),
                ry: rng.random_range(0.08..0.35) * hf,
                rx: rng.random_range(0.08..0.35) * wf,
            }
        } else {
            let (y0, x0) = (rng.random_range(0.0..hf * 0.8), rng.random_range(0.0..wf * 0.8));
            Shape::Rect {
                y0,
                x0,
                y1: y0 + rng.random_range(0.1..0.5) * hf,
                x1: x0 + rng.random_range(0.1..0.5) * wf,
            }
        };
        let level = rng.random_range(0.05..0.95);
        let slope = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        shapes.push((shape, level, slope));
    }
    let amp = rng.random_range(0.0..0.06);
    let (fy, fx) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
    let phase = rng.random_range(0.0..std::f64::consts::TAU);

    let pixels = Array3::from_shape_fn((h, w, 1), |(i, j, _)| {
        let (y, x) = (i as f64 / hf, j as f64 / wf);
        let mut v = base + gy * (y - 0.5) + gx * (x - 0.5);
        for (shape, level, (sy, sx)) in &shapes {
            if shape.contains(i as f64 + 0.5, j as f64 + 0.5) {
                v = level + sy * (y - 0.5) + sx * (x - 0.5);
            }
        }
        v += amp * (std::f64::consts::TAU * (fy * y + fx * x) + phase).sin();
        v.clamp(0.05, 0.95) as f32
    });
    ImageSample::new(pixels, ColorSpace::Grey)
}
