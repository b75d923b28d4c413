//! Image pairs shared with `data/gen_metrics_reference.py`, which froze
//! scikit-image scores for them in `data/metrics_reference.json`.

use ndarray::Array3;

pub const REFERENCE_JSON: &str = include_str!("../data/metrics_reference.json");

#[derive(serde::Deserialize)]
pub struct Reference {
    pub pair: u64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn references() -> Vec<Reference> {
    serde_json::from_str(REFERENCE_JSON).expect("reference fixture parses")
}

fn stream(seed: u64) -> impl FnMut() -> i64 {
    const A: u64 = 6364136223846793005;
    const C: u64 = 1442695040888963407;
    let mut s = seed.wrapping_mul(A).wrapping_add(C);
    move || {
        s = s.wrapping_mul(A).wrapping_add(C);
        ((s >> 40) & 0xffff) as i64
    }
}

/// Pair `p`: a 16-bit random image and a perturbed copy, as `[0, 1]` floats.
pub fn pair(p: u64) -> (Array3<f32>, Array3<f32>) {
    let (h, w, c) = (12 + (p % 5) as usize * 3, 11 + (p % 7) as usize * 2, if p % 3 == 0 { 3 } else { 1 });
    let mut next = stream(p);
    let a: Vec<i64> = (0..h * w * c).map(|_| next()).collect();
    let amp = (p % 10 + 1) as i64;
    let b: Vec<i64> = a.iter().map(|&x| (x + ((next() - 32768) * amp).div_euclid(40)).clamp(0, 65535)).collect();
    let to = |v: Vec<i64>| Array3::from_shape_vec((h, w, c), v.into_iter().map(|k| (k as f64 / 65535.0) as f32).collect()).unwrap();
    (to(a), to(b))
}
