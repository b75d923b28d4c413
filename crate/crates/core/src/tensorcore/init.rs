use ndarray::{Array, Dimension, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Real;

/// Parameter initializer whose draws depend only on `(seed, parameter name)`.
///
/// Two models that share a parameter name therefore start from the same
/// values for it, whatever other parameters they contain.
#[derive(Debug, Clone, Copy)]
pub struct ParamInit {
    pub seed: u64,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name))
    }

    /// `U(-bound, bound)` entries.
    pub fn uniform<T: Real, Sh: ShapeBuilder>(&self, name: &str, shape: Sh, bound: f64) -> Array<T, Sh::Dim>
    where
        Sh::Dim: Dimension,
    {
        let mut rng = self.rng(name);
        Array::from_shape_simple_fn(shape, || T::lit(rng.random_range(-bound..bound)))
    }

    /// `N(0, std^2)` entries.
    pub fn normal<T: Real, Sh: ShapeBuilder>(&self, name: &str, shape: Sh, std: f64) -> Array<T, Sh::Dim>
    where
        Sh::Dim: Dimension,
    {
        let mut rng = self.rng(name);
        Array::from_shape_simple_fn(shape, || {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(std * z)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn draws_depend_on_name_and_seed_only() {
        let a: Array2<f32> = ParamInit::new(1).uniform("w", (3, 4), 0.5);
        let b: Array2<f32> = ParamInit::new(1).uniform("w", (3, 4), 0.5);
        let c: Array2<f32> = ParamInit::new(1).uniform("v", (3, 4), 0.5);
        let d: Array2<f32> = ParamInit::new(2).uniform("w", (3, 4), 0.5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert!(a.iter().all(|v| v.abs() < 0.5));
    }
}
