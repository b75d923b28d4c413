use denoise_core::imagepipe::{ColorSpace, ImageSample, NoiseSpec};
use denoise_core::model::{Checkpoint, DenoiserModel, ModelConfig};
use denoise_core::tensorcore::{adam_step, AdamConfig, OptimizerState};
use denoise_core::trainer::{
    blind_l2_loss, lr_schedule, prepare_validation, BlindBatch, CurveLog, CurveRecord, TrainConfig, Trainer,
    BEST_CHECKPOINT, CURVE_FILE, FINAL_CHECKPOINT, LAST_CHECKPOINT,
};
use denoise_core::Error;
use ndarray::{Array, Array3, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(size: usize, seed: u64) -> ImageSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c) = (rng.random_range(0.1..0.4), rng.random_range(0.1..0.4), rng.random_range(0.2..0.6));
    let px = Array::from_shape_fn((size, size, 1), |(i, j, _)| {
        (c + a * (i as f32 / 5.0).sin() + b * (j as f32 / 7.0).cos()).clamp(0.0, 1.0)
    });
    ImageSample::new(px, ColorSpace::Grey)
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 2,
        crop: 16,
        lr_init: 1e-3,
        lr_gamma: 0.5,
        lr_step: 1,
        seed,
        patches_per_image: 2,
        micro_batch: 4,
        ..TrainConfig::toy()
    }
}

fn small_trainer(seed: u64, out: Option<std::path::PathBuf>) -> Trainer {
    let cfg = small_config(seed);
    let train: Vec<_> = (0..3).map(|i| scene(24, 100 + i)).collect();
    let val = prepare_validation(vec![scene(16, 200)], cfg.noise.as_ref(), seed).unwrap();
    let model = DenoiserModel::new(ModelConfig::toy(), seed).unwrap();
    Trainer::new(model, cfg, train, val, out).unwrap()
}

fn all_masks(n: usize, h: usize, w: usize) -> Vec<Vec<(usize, usize)>> {
    vec![(0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect(); n]
}

#[test]
fn loss_zero_when_prediction_matches() {
    let x = Array4::from_elem((2, 4, 4, 1), 0.3f32);
    let masks = vec![vec![(0, 0), (1, 2)], vec![(3, 3)]];
    let (l, g) = blind_l2_loss(&x, &x, &masks).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn loss_of_constant_offset() {
    let noisy = Array::from_shape_fn((2, 4, 4, 3), |(n, i, j, k)| (n + i + j + k) as f32 / 20.0);
    let pred = &noisy + 0.1;
    let (l, _) = blind_l2_loss(&pred, &noisy, &all_masks(2, 4, 4)).unwrap();
    assert!((l - 0.01).abs() < 1e-7, "{l}");
    let (l, _) = blind_l2_loss(&pred, &noisy, &[vec![(1, 1)], vec![(2, 0), (0, 3)]]).unwrap();
    assert!((l - 0.01).abs() < 1e-7, "{l}");
}

#[test]
fn loss_rejects_empty_masks() {
    let x = Array4::<f32>::zeros((1, 4, 4, 1));
    assert!(matches!(blind_l2_loss(&x, &x, &[vec![]]), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn loss_ignores_unmasked_predictions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = (2, 8, 8, 1);
        let pred = Array::from_shape_simple_fn(shape, || rng.random_range(0.0f32..1.0));
        let noisy = Array::from_shape_simple_fn(shape, || rng.random_range(0.0f32..1.0));
        let batch = BlindBatch::from_noisy(&[noisy.index_axis(ndarray::Axis(0), 0).to_owned()], 1, 4).unwrap();
        let masks = vec![batch.masks[rng.random_range(0..batch.len())].clone(), batch.masks[rng.random_range(0..batch.len())].clone()];
        let (base, _) = blind_l2_loss(&pred, &noisy, &masks).unwrap();
        let mut moved = pred.clone();
        for (b, m) in masks.iter().enumerate() {
            for r in 0..8 {
                for c in 0..8 {
                    if !m.contains(&(r, c)) {
                        moved[[b, r, c, 0]] = rng.random_range(-5.0f32..5.0);
                    }
                }
            }
        }
        let (after, grad) = blind_l2_loss(&moved, &noisy, &masks).unwrap();
        prop_assert_eq!(base.to_bits(), after.to_bits());
        for (b, m) in masks.iter().enumerate() {
            for r in 0..8 {
                for c in 0..8 {
                    if !m.contains(&(r, c)) {
                        prop_assert_eq!(grad[[b, r, c, 0]], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn staircase_schedule() {
    let cfg = TrainConfig::paper(ColorSpace::Srgb, Some(NoiseSpec::fixed(25.0)));
    assert_eq!(cfg.lr_at(0), 3.0e-4);
    assert!((cfg.lr_at(20) - 7.5e-5).abs() < 1e-18);
    assert!((cfg.lr_at(40) - 1.875e-5).abs() < 1e-18);
    for e in 0..100 {
        let expect = 3e-4 * 0.25f64.powi((e / 20) as i32);
        assert_eq!(cfg.lr_at(e), expect, "epoch {e}");
        assert_eq!(lr_schedule(3e-4, 0.25, 20, e), expect);
    }
    assert_eq!(TrainConfig::paper(ColorSpace::RawBayer, None).lr_init, 1e-4);
}

#[test]
fn paper_recipe_values() {
    let cfg = TrainConfig::paper(ColorSpace::Srgb, None);
    assert_eq!((cfg.epochs, cfg.batch_size, cfg.crop, cfg.lr_step), (100, 4, 128, 20));
    assert_eq!((cfg.lr_gamma, cfg.weight_decay), (0.25, 1e-8));
    let mut bad = cfg.clone();
    bad.lr_step = 0;
    assert!(bad.validate().is_err());
}

#[test]
fn one_small_step_lowers_frozen_batch_loss() {
    let mut decreased = 0;
    for seed in 0..10 {
        let mut model = DenoiserModel::new(ModelConfig::toy(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let noisy: Vec<Array3<f32>> = (0..2)
            .map(|_| Array::from_shape_simple_fn((16, 16, 1), || rng.random_range(0.0f32..1.0)))
            .collect();
        let batch = BlindBatch::from_noisy(&noisy, 1, 4).unwrap();
        let mut opt = OptimizerState::new(AdamConfig {
            learning_rate: 1e-5,
            ..AdamConfig::default()
        })
        .unwrap();
        let before = batch.loss_and_grad(&model.net, &mut model.params, 8).unwrap();
        adam_step(&mut model.params, &mut opt).unwrap();
        let after = batch.loss(&model.net, &model.params, 8).unwrap();
        if after < before {
            decreased += 1;
        }
    }
    assert!(decreased >= 9, "decreased in {decreased}/10 seeds");
}

#[test]
fn batch_loss_independent_of_micro_batch() {
    let model = DenoiserModel::new(ModelConfig::toy(), 3).unwrap();
    let noisy: Vec<Array3<f32>> = (0..2).map(|i| scene(16, i).pixels).collect();
    let batch = BlindBatch::from_noisy(&noisy, 1, 4).unwrap();
    let a = batch.loss(&model.net, &model.params, 32).unwrap();
    let b = batch.loss(&model.net, &model.params, 5).unwrap();
    assert!((a - b).abs() < 1e-9 * a.max(1e-12));
}

#[test]
fn fixed_seed_reproduces_loss_sequence() {
    let mut a = small_trainer(4, None);
    let mut b = small_trainer(4, None);
    for _ in 0..4 {
        assert_eq!(a.step().unwrap().loss.to_bits(), b.step().unwrap().loss.to_bits());
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let mut straight = small_trainer(5, None);
    let mut first = small_trainer(5, None);
    for _ in 0..1 {
        straight.step().unwrap();
        first.step().unwrap();
    }
    let bytes = first.checkpoint().unwrap().to_bytes().unwrap();
    drop(first);
    let fresh = small_trainer(5, None);
    let ck = Checkpoint::from_bytes(&bytes).unwrap();
    let mut resumed = Trainer::resume(ck, fresh.train_images().to_vec(), fresh.val_images().to_vec(), None).unwrap();
    for _ in 0..5 {
        let x = straight.step().unwrap();
        let y = resumed.step().unwrap();
        assert_eq!((x.epoch, x.step), (y.epoch, y.step));
        assert_eq!(x.loss.to_bits(), y.loss.to_bits());
    }
}

#[test]
fn run_writes_checkpoints_and_one_curve_record_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = small_trainer(6, Some(dir.path().to_path_buf()));
    t.run().unwrap();
    for f in [BEST_CHECKPOINT, LAST_CHECKPOINT, FINAL_CHECKPOINT, CURVE_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let curve = CurveLog::load(&dir.path().join(CURVE_FILE)).unwrap();
    assert_eq!(curve.records.len(), 2);
    assert_eq!(curve, t.curve);
    assert_eq!(curve.records.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(curve.records[1].lr, 5e-4);
    assert!(curve.records.iter().all(|r| r.val_psnr.is_some() && r.val_ssim.is_some()));
    assert!(matches!(t.step(), Err(Error::State(_))));
}

#[test]
fn non_finite_loss_aborts_and_keeps_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = small_trainer(7, Some(dir.path().to_path_buf()));
    while t.state.epoch == 0 {
        t.step().unwrap();
    }
    let saved = std::fs::read(dir.path().join(LAST_CHECKPOINT)).unwrap();
    let name = t.model.params.names().next().unwrap().to_string();
    t.model.params.value_mut(&name).unwrap().fill(f32::NAN);
    let before = t.model.params.clone();
    assert!(matches!(t.step(), Err(Error::Numerical(_))));
    assert_eq!(t.state.step_in_epoch, 0);
    for ((_, a), (_, b)) in before.iter().zip(t.model.params.iter()) {
        let bits = |x: &ndarray::ArrayD<f32>| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.value), bits(&b.value));
    }
    assert_eq!(std::fs::read(dir.path().join(LAST_CHECKPOINT)).unwrap(), saved);
    assert!(Checkpoint::load(&dir.path().join(LAST_CHECKPOINT)).unwrap().into_model().is_ok());
}

#[test]
fn variant_toggles_touch_only_their_subgraphs() {
    let names = |local: bool, sne: bool| {
        let mut cfg = ModelConfig::toy();
        cfg.stack.enable_local = local;
        cfg.enable_sne = sne;
        let m = DenoiserModel::new(cfg, 0).unwrap();
        m.params.iter().map(|(n, p)| (n.to_string(), p.value.shape().to_vec())).collect::<Vec<_>>()
    };
    let full = names(true, true);
    let baseline = names(false, false);
    let local = |n: &str| n.contains(".local.");
    let sne = |n: &str| n.starts_with("sne.");
    for (part, drop_local, drop_sne) in [
        (baseline, true, true),
        (names(true, false), false, true),
        (names(false, true), true, false),
    ] {
        let expect: Vec<_> = full
            .iter()
            .filter(|(n, _)| !(drop_local && local(n)) && !(drop_sne && sne(n)))
            .cloned()
            .collect();
        assert_eq!(part, expect);
    }
    assert!(full.iter().any(|(n, _)| n.contains(".local.")));
    assert!(full.iter().any(|(n, _)| n.starts_with("sne.")));
}

#[test]
fn curve_log_round_trips_jsonl() {
    let mut log = CurveLog::default();
    for e in 0..3 {
        log.push(CurveRecord {
            epoch: e,
            mean_loss: 0.1 / (e + 1) as f64,
            val_psnr: Some(20.0 + e as f64),
            val_ssim: if e == 1 { None } else { Some(0.5) },
            lr: 1e-3,
        });
    }
    let text = log.to_jsonl().unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(CurveLog::from_jsonl(&text).unwrap(), log);
    assert_eq!(log.best_psnr().unwrap().epoch, 2);
    assert!(CurveLog::from_jsonl("{\"epoch\":0}").is_err());
}
