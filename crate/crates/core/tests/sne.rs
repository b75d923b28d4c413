use denoise_core::sne::Sne;
use denoise_core::tensorcore::{ParamInit, ParamStore};
use ndarray::{Array, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randomized(channels: usize, seed: u64) -> (Sne, ParamStore<f64>) {
    let sne = Sne::new(channels);
    let mut store = ParamStore::new();
    sne.init(&mut store, &ParamInit::new(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, p) in store.iter_mut() {
        p.value.mapv_inplace(|_| rng.random_range(-0.8..0.8));
    }
    (sne, store)
}

fn random(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array::from_shape_simple_fn(shape, || rng.random_range(0.0..1.0))
}

#[test]
fn fresh_extractor_outputs_zero() {
    let sne = Sne::new(3);
    let mut store = ParamStore::<f32>::new();
    sne.init(&mut store, &ParamInit::new(0)).unwrap();
    let x = Array::from_shape_fn((2, 4, 4, 3), |(n, i, j, k)| (n + i * 3 + j * 5 + k) as f32 * 0.01);
    let (y, _) = sne.forward(&store, &x).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_mlp_gives_zero_noise() {
    let (sne, mut store) = randomized(3, 1);
    for (name, p) in store.iter_mut() {
        if name.starts_with("sne.mlp.") {
            p.value.fill(0.0);
        }
    }
    let (y, _) = sne.forward(&store, &random((1, 4, 4, 3), 2)).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn constant_channels_give_mlp_of_the_shift() {
    let (sne, mut store) = randomized(3, 3);
    store.value_mut("sne.ln.shift").unwrap().fill(0.0);
    let x = Array::from_shape_fn((1, 4, 4, 3), |(_, _, _, k)| 0.2 + 0.3 * k as f64);
    let (y, _) = sne.forward(&store, &x).unwrap();
    // the normalized input is zero everywhere, so the output is MLP(0)
    let (bias_only, _) = sne.mlp.forward(&store, &Array4::zeros((1, 1, 1, 3))).unwrap();
    for ((_, _, _, k), v) in y.indexed_iter() {
        assert!((v - bias_only[[0, 0, 0, k]]).abs() < 1e-12);
    }
}

#[test]
fn rejects_empty_extent_and_wrong_channels() {
    let (sne, store) = randomized(3, 4);
    assert!(sne.forward(&store, &Array4::zeros((1, 0, 4, 3))).is_err());
    assert!(sne.forward(&store, &Array4::zeros((1, 4, 4, 2))).is_err());
}

#[test]
fn parameters_are_named_under_sne() {
    let (_, store) = randomized(4, 5);
    assert!(store.names().all(|n| n.starts_with("sne.ln.") || n.starts_with("sne.mlp.")));
    assert!(store.contains("sne.ln.gain"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spatial_permutation_equivariance(seed in 0u64..10_000) {
        let (sne, store) = randomized(3, seed);
        let (h, w) = (4, 5);
        let x = random((2, h, w, 3), seed ^ 0xabc);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..h * w).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permute = |a: &Array4<f64>| {
            Array::from_shape_fn(a.raw_dim(), |(n, i, j, k)| {
                let src = perm[i * w + j];
                a[[n, src / w, src % w, k]]
            })
        };
        let (y, _) = sne.forward(&store, &x).unwrap();
        let (yp, _) = sne.forward(&store, &permute(&x)).unwrap();
        let diff = (&yp - &permute(&y)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn shape_preserved_and_deterministic(seed in 0u64..10_000, h in 1usize..6, w in 1usize..6) {
        let (sne, store) = randomized(4, seed);
        let x = random((1, h, w, 4), seed);
        let (a, _) = sne.forward(&store, &x).unwrap();
        let (b, _) = sne.forward(&store, &x).unwrap();
        prop_assert_eq!(a.dim(), x.dim());
        prop_assert_eq!(a, b);
    }
}
