//! Packing of single-plane Bayer mosaics into 4-channel quarter-resolution
//! images. Channel order is the phase `(0,0), (0,1), (1,0), (1,1)`.

use ndarray::{s, Array3, Axis};

use super::{pd_merge_arrays, pd_split_array, ColorSpace, ImageSample};
use crate::error::Result;

fn pack(raw: &Array3<f32>) -> Result<Array3<f32>> {
    let (h, w, c) = raw.dim();
    if c != 1 {
        return Err(shape_err!("Bayer mosaic must have one channel, got {c}"));
    }
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("Bayer mosaic {h}x{w} has odd dimensions"));
    }
    let mut out = Array3::zeros((h / 2, w / 2, 4));
    for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        out.slice_mut(s![.., .., k])
            .assign(&raw.slice(s![dy..;2, dx..;2, 0]));
    }
    Ok(out)
}

fn unpack(quad: &Array3<f32>) -> Result<Array3<f32>> {
    let (_, _, c) = quad.dim();
    if c != 4 {
        return Err(shape_err!("packed Bayer image must have 4 channels, got {c}"));
    }
    let planes: Vec<Array3<f32>> = (0..4)
        .map(|k| quad.slice(s![.., .., k..k + 1]).to_owned())
        .collect();
    pd_merge_arrays(&planes, 2)
}

pub fn bayer_split(raw: &ImageSample) -> Result<ImageSample> {
    Ok(ImageSample {
        pixels: pack(&raw.pixels)?,
        colorspace: ColorSpace::RawBayer,
        clean: raw.clean.as_ref().map(pack).transpose()?,
    })
}

pub fn bayer_merge(quad: &ImageSample) -> Result<ImageSample> {
    Ok(ImageSample {
        pixels: unpack(&quad.pixels)?,
        colorspace: ColorSpace::RawBayer,
        clean: quad.clean.as_ref().map(unpack).transpose()?,
    })
}

/// `pd_split` with `p = 2` followed by channel stacking; kept as an
/// independent route to cross-check [`bayer_split`].
pub fn bayer_split_via_pd(raw: &Array3<f32>) -> Result<Array3<f32>> {
    let subs = pd_split_array(raw, 2)?;
    let views: Vec<_> = subs.iter().map(|s| s.view()).collect();
    ndarray::concatenate(Axis(2), &views).map_err(|e| shape_err!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr3, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn smallest_mosaic() {
        let raw = ImageSample::new(arr3(&[[[1.0f32], [2.0]], [[3.0], [4.0]]]), ColorSpace::RawBayer);
        let q = bayer_split(&raw).unwrap();
        assert_eq!(q.pixels, arr3(&[[[1.0f32, 2.0, 3.0, 4.0]]]));
        assert_eq!(bayer_merge(&q).unwrap(), raw);
    }

    #[test]
    fn round_trip_and_pd_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let px = Array::from_shape_fn((16, 16, 1), |_| rng.random::<f32>());
            let raw = ImageSample::new(px.clone(), ColorSpace::RawBayer);
            let q = bayer_split(&raw).unwrap();
            assert_eq!(q.pixels, bayer_split_via_pd(&px).unwrap());
            assert_eq!(bayer_merge(&q).unwrap(), raw);
        }
    }

    #[test]
    fn invalid_shapes() {
        let odd = ImageSample::new(Array3::zeros((3, 4, 1)), ColorSpace::RawBayer);
        assert!(matches!(bayer_split(&odd), Err(crate::Error::Shape(_))));
        let rgb = ImageSample::new(Array3::zeros((2, 2, 3)), ColorSpace::Srgb);
        assert!(matches!(bayer_merge(&rgb), Err(crate::Error::Shape(_))));
        assert!(bayer_split(&rgb).is_err());
    }
}
