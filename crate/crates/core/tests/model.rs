use denoise_core::imagepipe::{collect_blind, mask_map, ColorSpace, ImageSample};
use denoise_core::model::{blind_pipeline, Checkpoint, DenoiserModel, ModelConfig, CHECKPOINT_MAGIC};
use denoise_core::Error;
use ndarray::{stack, Array, Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Array3<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array::from_shape_simple_fn((h, w, c), || rng.random_range(0.0f32..1.0))
}

fn scramble(model: &mut DenoiserModel, seed: u64, scale: f32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, p) in model.params.iter_mut() {
        p.value.mapv_inplace(|v| v + rng.random_range(-scale..scale));
    }
}

fn grey(p: usize) -> ModelConfig {
    let mut cfg = ModelConfig::toy();
    cfg.pd_factor = p;
    cfg
}

/// Mean of the in-bounds 4-neighbours of `(r, c)` within its PD sub-image.
fn fill_oracle(img: &Array3<f32>, p: usize, r: usize, c: usize) -> Vec<f32> {
    let (h, w, ch) = img.dim();
    let (hs, ws) = (h / p, w / p);
    let (a, b, i, j) = (r % p, c % p, r / p, c / p);
    let mut nb = Vec::new();
    if i > 0 {
        nb.push((i - 1, j));
    }
    if i + 1 < hs {
        nb.push((i + 1, j));
    }
    if j > 0 {
        nb.push((i, j - 1));
    }
    if j + 1 < ws {
        nb.push((i, j + 1));
    }
    (0..ch)
        .map(|k| {
            let sum: f64 = nb.iter().map(|&(y, x)| img[[p * y + a, p * x + b, k]] as f64).sum();
            (sum / nb.len() as f64) as f32
        })
        .collect()
}

#[test]
fn fresh_model_passes_blinds_through() {
    let model = DenoiserModel::new(ModelConfig::toy(), 3).unwrap();
    let x = Array::from_shape_fn((3, 8, 8, 1), |(n, i, j, _)| (n * 64 + i * 8 + j) as f32 / 200.0);
    let (s1, s2) = model.forward_blind(&x).unwrap();
    assert_eq!(s1, x);
    assert_eq!(s2, x);
}

#[test]
fn sne_disabled_means_single_stage() {
    let mut cfg = ModelConfig::toy();
    cfg.enable_sne = false;
    let mut model = DenoiserModel::new(cfg, 4).unwrap();
    scramble(&mut model, 5, 0.1);
    assert!(!model.params.names().any(|n| n.starts_with("sne.")));
    let x = Array::from_shape_fn((2, 8, 8, 1), |(n, i, j, _)| ((n + i * 3 + j) % 7) as f32 / 7.0);
    let (s1, s2) = model.forward_blind(&x).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1.dim(), x.dim());
    assert_ne!(s1, x);
}

#[test]
fn zero_model_returns_constant_image_exactly() {
    for (p, s) in [(1, 4), (2, 4), (1, 1), (2, 2)] {
        let mut cfg = grey(p);
        cfg.mask_stride = s;
        let mut model = DenoiserModel::new(cfg, 6).unwrap();
        model.zero_all();
        for v in [0.0f32, 0.3, 0.7071, 1.0] {
            let img = ImageSample::new(Array3::from_elem((16, 16, 1), v), ColorSpace::Grey);
            assert_eq!(model.full_inference(&img).unwrap().pixels, img.pixels, "p={p} s={s} v={v}");
        }
    }
}

#[test]
fn zero_model_returns_the_mask_fill() {
    for p in [1, 2] {
        let mut model = DenoiserModel::new(grey(p), 7).unwrap();
        model.zero_all();
        let img = random_image(16, 24, 1, 8 + p as u64);
        let out = model.full_inference(&ImageSample::new(img.clone(), ColorSpace::Grey)).unwrap();
        for r in 0..16 {
            for c in 0..24 {
                assert_eq!(out.pixels[[r, c, 0]], fill_oracle(&img, p, r, c)[0], "p={p} ({r},{c})");
            }
        }
    }
}

#[test]
fn fresh_init_is_also_an_exact_identity_on_constants() {
    let model = DenoiserModel::new(ModelConfig::toy(), 9).unwrap();
    let img = ImageSample::new(Array3::from_elem((16, 16, 1), 0.45), ColorSpace::Grey);
    assert_eq!(model.full_inference(&img).unwrap().pixels, img.pixels);
}

#[test]
fn raw_mosaic_constant_survives_zero_model() {
    let mut cfg = ModelConfig::paper(ColorSpace::RawBayer);
    cfg.stack = denoise_core::cadt::StackConfig::toy(4);
    let mut model = DenoiserModel::new(cfg, 10).unwrap();
    model.zero_all();
    let img = ImageSample::new(Array3::from_elem((32, 32, 1), 0.25), ColorSpace::RawBayer);
    let out = model.full_inference(&img).unwrap();
    assert_eq!(out.colorspace, ColorSpace::RawBayer);
    assert_eq!(out.pixels, img.pixels);
}

#[test]
fn every_output_pixel_comes_from_a_pass_that_masked_it() {
    for (p, s) in [(1, 4), (2, 4), (2, 2), (1, 2)] {
        let img = random_image(8, 8, 1, 11);
        let mut call = 0usize;
        // encode (sub-image, blind entry) in the integer part and keep the
        // blind's own value in the fraction
        let out = blind_pipeline(&img, p, s, |batch: &Array4<f32>| {
            let mut y = batch.clone();
            for (k, mut b) in y.outer_iter_mut().enumerate() {
                let tag = (call * 100 + k) as f32;
                b.mapv_inplace(|v| tag * 10.0 + v);
            }
            call += 1;
            Ok(y)
        })
        .unwrap();
        assert_eq!(call, p * p);
        for r in 0..8 {
            for c in 0..8 {
                let v = out[[r, c, 0]];
                let tag = (v / 10.0).floor() as usize;
                let (sub, k) = (tag / 100, tag % 100);
                assert_eq!(sub, (r % p) * p + c % p, "p={p} s={s} ({r},{c})");
                let (i, j) = (r / p, c / p);
                assert_eq!(k, (i % s) * s + j % s, "p={p} s={s} ({r},{c})");
                let fill = fill_oracle(&img, p, r, c)[0];
                assert!((v - tag as f32 * 10.0 - fill).abs() < 1e-3, "({r},{c}) saw an unmasked value");
            }
        }
    }
}

#[test]
fn pipeline_without_pd_is_mask_forward_collect() {
    let mut model = DenoiserModel::new(ModelConfig::toy(), 12).unwrap();
    scramble(&mut model, 13, 0.05);
    for seed in 0..3 {
        let img = random_image(16, 16, 1, 20 + seed);
        let st = mask_map(&img, 4).unwrap();
        let views: Vec<_> = st.blinds.iter().map(|b| b.view()).collect();
        let (_, s2) = model.forward_blind(&stack(Axis(0), &views).unwrap()).unwrap();
        let outs: Vec<Array3<f32>> = s2.outer_iter().map(|v| v.to_owned()).collect();
        let direct = collect_blind(&outs, &st).unwrap();
        let piped = blind_pipeline(&img, 1, 4, |b| Ok(model.forward_blind(b)?.1)).unwrap();
        assert_eq!(piped, direct);
        let full = model.full_inference(&ImageSample::new(img, ColorSpace::Grey)).unwrap();
        assert_eq!(full.pixels, direct.mapv(|v| v.clamp(0.0, 1.0)));
    }
}

#[test]
fn output_is_clamped_and_deterministic() {
    let mut model = DenoiserModel::new(ModelConfig::toy(), 14).unwrap();
    scramble(&mut model, 15, 0.8);
    let img = ImageSample::new(random_image(16, 16, 1, 16), ColorSpace::Grey);
    let a = model.full_inference(&img).unwrap();
    let b = model.full_inference(&img).unwrap();
    assert_eq!(a, b);
    assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn inference_preconditions() {
    let model = DenoiserModel::new(grey(2), 17).unwrap();
    let odd = ImageSample::new(Array3::zeros((12, 16, 1)), ColorSpace::Grey);
    assert!(matches!(model.full_inference(&odd), Err(Error::Shape(_))));
    let rgb = ImageSample::new(Array3::zeros((16, 16, 3)), ColorSpace::Srgb);
    assert!(model.full_inference(&rgb).is_err());
}

#[test]
fn presets_and_strict_config() {
    let srgb = ModelConfig::paper(ColorSpace::Srgb);
    assert_eq!((srgb.stack.groups, srgb.stack.units_per_group, srgb.stack.embed_dim), (3, 6, 60));
    assert_eq!((srgb.mask_stride, srgb.pd_factor), (4, 1));
    assert_eq!(ModelConfig::paper(ColorSpace::RawBayer).pd_factor, 2);
    let toy = ModelConfig::toy();
    assert_eq!((toy.stack.embed_dim, toy.stack.groups, toy.stack.units_per_group, toy.stack.window), (16, 1, 2, 4));
    assert_eq!((toy.mask_stride, toy.pd_factor), (4, 1));
    let mut v = serde_json::to_value(&toy).unwrap();
    assert_eq!(serde_json::from_value::<ModelConfig>(v.clone()).unwrap(), toy);
    v["surprise"] = serde_json::json!(1);
    assert!(serde_json::from_value::<ModelConfig>(v).is_err());
    let mut bad = toy.clone();
    bad.stack.image_channels = 3;
    assert!(bad.validate().is_err());
}

fn scrambled_checkpoint() -> Checkpoint {
    let mut model = DenoiserModel::new(ModelConfig::toy(), 18).unwrap();
    scramble(&mut model, 19, 0.5);
    Checkpoint::from_model(&model)
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ck = scrambled_checkpoint();
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config, ck.config);
    for ((na, a), (nb, b)) in ck.params.iter().zip(back.params.iter()) {
        assert_eq!(na, nb);
        let bits = |x: &ndarray::ArrayD<f32>| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.value), bits(&b.value), "{na}");
    }
    let img = ImageSample::new(random_image(16, 16, 1, 20), ColorSpace::Grey);
    let m1 = ck.into_model().unwrap();
    let m2 = back.into_model().unwrap();
    assert_eq!(m1.full_inference(&img).unwrap(), m2.full_inference(&img).unwrap());
}

#[test]
fn truncated_or_foreign_files_are_format_errors() {
    let bytes = scrambled_checkpoint().to_bytes().unwrap();
    for cut in [0, 7, 12, 40, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::Format(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
}

#[test]
fn edited_shape_in_manifest_names_the_parameter() {
    let bytes = scrambled_checkpoint().to_bytes().unwrap();
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    let target = manifest["params"][2]["name"].as_str().unwrap().to_string();
    manifest["params"][2]["shape"] = serde_json::json!([1, 2, 3]);
    let body = serde_json::to_vec(&manifest).unwrap();
    let mut edited = CHECKPOINT_MAGIC.to_vec();
    edited.extend_from_slice(&(body.len() as u64).to_le_bytes());
    edited.extend_from_slice(&body);
    edited.extend_from_slice(&bytes[16 + len..]);
    match Checkpoint::from_bytes(&edited) {
        Err(Error::Format(msg)) => assert!(msg.contains(&target), "{msg}"),
        other => panic!("expected a format error, got {other:?}"),
    }
}
