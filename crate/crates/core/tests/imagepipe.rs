use denoise_core::imagepipe::{
    add_gaussian, augment, bayer_merge, bayer_split, bayer_split_via_pd, collect_blind, mask_map, pd_merge, pd_merge_arrays,
    pd_split, pd_split_array, ColorSpace, ImageSample, NoiseSpec,
};
use ndarray::{Array, Array3};
use proptest::prelude::*;

fn image(h: usize, w: usize, c: usize, vals: &[f32]) -> Array3<f32> {
    Array::from_shape_fn((h, w, c), |(i, j, k)| vals[(i * w * c + j * c + k) % vals.len()])
}

fn values() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(0.0f32..=1.0, 1..64)
}

#[test]
fn pd_split_of_raster_ramp() {
    let img = Array::from_shape_fn((4, 4, 1), |(i, j, _)| (i * 4 + j) as f32);
    let subs = pd_split_array(&img, 2).unwrap();
    assert_eq!(subs.len(), 4);
    let first: Vec<f32> = subs[0].iter().copied().collect();
    assert_eq!(first, vec![0.0, 2.0, 8.0, 10.0]);
    assert_eq!(pd_merge_arrays(&subs, 2).unwrap(), img);
}

#[test]
fn pd_wrong_count_rejected() {
    let img = Array3::<f32>::zeros((4, 4, 1));
    let subs = pd_split_array(&img, 2).unwrap();
    assert!(pd_merge_arrays(&subs[..3], 2).is_err());
    assert!(pd_split_array(&Array3::<f32>::zeros((3, 4, 1)), 2).is_err());
}

#[test]
fn bayer_rejects_colour_quads_and_odd_mosaics() {
    let rgb = ImageSample::new(Array3::zeros((1, 1, 3)), ColorSpace::RawBayer);
    assert!(bayer_merge(&rgb).is_err());
    let odd = ImageSample::new(Array3::zeros((3, 4, 1)), ColorSpace::RawBayer);
    assert!(bayer_split(&odd).is_err());
}

#[test]
fn partition_exhaustive_small_grid() {
    for h in [8, 12, 16] {
        for w in [8, 12, 16] {
            for s in [1, 2, 4] {
                let img = Array::from_shape_fn((h, w, 1), |(i, j, _)| ((i * 7 + j * 3) % 11) as f32 / 10.0);
                let st = mask_map(&img, s).unwrap();
                assert_eq!(st.len(), s * s);
                let mut hits = vec![0u32; h * w];
                for (k, pos) in st.mask_positions.iter().enumerate() {
                    assert_eq!(pos.len(), (h / s) * (w / s));
                    for &(r, c) in pos {
                        hits[r * w + c] += 1;
                        assert_eq!(st.owner(r, c), k);
                    }
                }
                assert!(hits.iter().all(|&n| n == 1), "{h}x{w} s={s}");
            }
        }
    }
}

#[test]
fn collected_blinds_reproduce_fill_values() {
    let img = Array::from_shape_fn((8, 8, 2), |(i, j, k)| ((i * 13 + j * 5 + k * 3) % 17) as f32 / 16.0);
    let st = mask_map(&img, 4).unwrap();
    let out = collect_blind(&st.blinds, &st).unwrap();
    for r in 0..8 {
        for c in 0..8 {
            let k = st.owner(r, c);
            for ch in 0..2 {
                assert_eq!(out[[r, c, ch]], st.blinds[k][[r, c, ch]]);
            }
        }
    }
}

#[test]
fn noise_spec_round_trips_json() {
    let spec = NoiseSpec {
        sigma_min: 5.0,
        sigma_max: 50.0,
        per_image_sigma: true,
    };
    let back: NoiseSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
    assert!(serde_json::from_str::<NoiseSpec>(r#"{"sigma_min":1,"sigma_max":2,"extra":0}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pd_round_trip_bit_exact(p in 1usize..5, hm in 1usize..5, wm in 1usize..5, c in 1usize..4, vals in values()) {
        let img = image(p * hm, p * wm, c, &vals);
        let sample = ImageSample::new(img.clone(), ColorSpace::Srgb);
        let subs = pd_split(&sample, p).unwrap();
        prop_assert_eq!(subs.len(), p * p);
        prop_assert_eq!(pd_merge(&subs, p).unwrap().pixels, img);
    }

    #[test]
    fn pd_sub_images_follow_lattice(p in 1usize..5, hm in 1usize..4, wm in 1usize..4, vals in values()) {
        let img = image(p * hm, p * wm, 1, &vals);
        let subs = pd_split_array(&img, p).unwrap();
        for a in 0..p {
            for b in 0..p {
                let sub = &subs[a * p + b];
                for i in 0..hm {
                    for j in 0..wm {
                        prop_assert_eq!(sub[[i, j, 0]], img[[p * i + a, p * j + b, 0]]);
                    }
                }
            }
        }
    }

    #[test]
    fn bayer_round_trip_and_pd_equivalence(hh in 1usize..9, wh in 1usize..9, vals in values()) {
        let raw = image(2 * hh, 2 * wh, 1, &vals);
        let sample = ImageSample::new(raw.clone(), ColorSpace::RawBayer);
        let quad = bayer_split(&sample).unwrap();
        prop_assert_eq!(&quad.pixels, &bayer_split_via_pd(&raw).unwrap());
        prop_assert_eq!(bayer_merge(&quad).unwrap().pixels, raw);
    }

    #[test]
    fn mask_partition_and_verbatim_copy(s in 1usize..5, hm in 1usize..5, wm in 1usize..5, vals in values()) {
        let (h, w) = (s * hm.max(2), s * wm.max(2));
        let img = image(h, w, 1, &vals);
        let st = mask_map(&img, s).unwrap();
        let mut hits = vec![0u32; h * w];
        for (k, pos) in st.mask_positions.iter().enumerate() {
            let m = st.mask(k);
            for &(r, c) in pos {
                hits[r * w + c] += 1;
            }
            for r in 0..h {
                for c in 0..w {
                    if !m[[r, c]] {
                        prop_assert_eq!(st.blinds[k][[r, c, 0]], img[[r, c, 0]]);
                    }
                }
            }
        }
        prop_assert!(hits.iter().all(|&n| n == 1));
    }

    #[test]
    fn collect_ignores_unmasked_outputs(seed in 0u64..1000, vals in values()) {
        let img = image(8, 8, 1, &vals);
        let st = mask_map(&img, 4).unwrap();
        let outs: Vec<Array3<f32>> = (0..16)
            .map(|k| Array::from_shape_fn((8, 8, 1), |(i, j, _)| ((k * 31 + i * 8 + j) as u64 ^ seed) as f32 * 1e-3))
            .collect();
        let base = collect_blind(&outs, &st).unwrap();
        let mut perturbed = outs.clone();
        for (k, o) in perturbed.iter_mut().enumerate() {
            let m = st.mask(k);
            for ((r, c, _), v) in o.indexed_iter_mut() {
                if !m[[r, c]] {
                    *v += 7.0;
                }
            }
        }
        prop_assert_eq!(collect_blind(&perturbed, &st).unwrap(), base);
    }

    #[test]
    fn constant_image_blinds_stay_constant(s in 1usize..5, v in 0.0f32..=1.0) {
        let img = Array3::from_elem((4 * s, 4 * s, 3), v);
        let st = mask_map(&img, s).unwrap();
        for b in &st.blinds {
            prop_assert!(b.iter().all(|&x| x == v));
        }
    }

    #[test]
    fn noise_and_augment_are_pure(seed in any::<u64>(), vals in values()) {
        let img = ImageSample::new(image(16, 16, 1, &vals), ColorSpace::Grey);
        let spec = NoiseSpec { sigma_min: 5.0, sigma_max: 50.0, per_image_sigma: true };
        let a = add_gaussian(&img, &spec, seed).unwrap();
        prop_assert_eq!(&a, &add_gaussian(&img, &spec, seed).unwrap());
        prop_assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        let c = augment(&a, 8, seed).unwrap();
        prop_assert_eq!(c.pixels.dim(), (8, 8, 1));
        prop_assert_eq!(c, augment(&a, 8, seed).unwrap());
    }
}
