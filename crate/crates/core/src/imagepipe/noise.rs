use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ImageSample;
use crate::error::Result;

/// Additive white Gaussian noise levels on the 0-255 scale.
///
/// With `per_image_sigma` each call draws `sigma ~ U[sigma_min, sigma_max]`;
/// otherwise `sigma_max` is used as a fixed level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_min: f64,
    pub sigma_max: f64,
    #[serde(default = "yes")]
    pub per_image_sigma: bool,
}

fn yes() -> bool {
    true
}

impl NoiseSpec {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            sigma_min: sigma,
            sigma_max: sigma,
            per_image_sigma: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.sigma_min && self.sigma_min <= self.sigma_max) || !self.sigma_max.is_finite() {
            return Err(config_err!(
                "noise range must satisfy 0 <= sigma_min <= sigma_max, got [{}, {}]",
                self.sigma_min,
                self.sigma_max
            ));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.per_image_sigma && self.sigma_max > self.sigma_min {
            rng.random_range(self.sigma_min..=self.sigma_max)
        } else {
            self.sigma_max
        }
    }
}

/// Adds clipped Gaussian noise. The input becomes the clean reference of the
/// returned sample.
pub fn add_gaussian(img: &ImageSample, spec: &NoiseSpec, seed: u64) -> Result<ImageSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (spec.draw(&mut rng) / 255.0) as f32;
    let clean = img.pixels.clone();
    let pixels = if sigma == 0.0 {
        clean.clone()
    } else {
        clean.mapv(|v| {
            let z: f32 = rng.sample(StandardNormal);
            (v + sigma * z).clamp(0.0, 1.0)
        })
    };
    Ok(ImageSample {
        pixels,
        colorspace: img.colorspace,
        clean: Some(clean),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagepipe::ColorSpace;
    use ndarray::Array3;

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImageSample::new(Array3::from_elem((8, 8, 1), 0.4), ColorSpace::Grey);
        let out = add_gaussian(&img, &NoiseSpec::fixed(0.0), 3).unwrap();
        assert_eq!(out.pixels, img.pixels);
        assert_eq!(out.clean.unwrap(), img.pixels);
    }

    #[test]
    fn seed_determinism() {
        let img = ImageSample::new(Array3::from_elem((16, 16, 3), 0.5), ColorSpace::Srgb);
        let spec = NoiseSpec {
            sigma_min: 5.0,
            sigma_max: 50.0,
            per_image_sigma: true,
        };
        let a = add_gaussian(&img, &spec, 42).unwrap();
        let b = add_gaussian(&img, &spec, 42).unwrap();
        let c = add_gaussian(&img, &spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.pixels, c.pixels);
    }

    #[test]
    fn sample_std_matches_sigma() {
        let img = ImageSample::new(Array3::from_elem((1000, 1000, 1), 0.5), ColorSpace::Grey);
        let out = add_gaussian(&img, &NoiseSpec::fixed(25.0), 7).unwrap();
        let n = out.pixels.len() as f64;
        let diff: Vec<f64> = out.pixels.iter().map(|v| *v as f64 - 0.5).collect();
        let mean = diff.iter().sum::<f64>() / n;
        let std = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = 25.0 / 255.0;
        assert!((std - target).abs() / target < 0.01, "std {std} target {target}");
    }

    #[test]
    fn invalid_range_rejected() {
        let spec = NoiseSpec {
            sigma_min: 10.0,
            sigma_max: 5.0,
            per_image_sigma: true,
        };
        assert!(spec.validate().is_err());
    }
}
