use indexmap::IndexMap;
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{ParamStore, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            weight_decay: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus hyperparameters.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub first_moment: IndexMap<String, ArrayD<T>>,
    pub second_moment: IndexMap<String, ArrayD<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(config_err!("learning rate must be positive, got {}", config.learning_rate));
        }
        if config.weight_decay < 0.0 {
            return Err(config_err!("weight decay must be non-negative"));
        }
        Ok(Self {
            config,
            first_moment: IndexMap::new(),
            second_moment: IndexMap::new(),
        })
    }

    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(config_err!("learning rate must be positive, got {lr}"));
        }
        self.config.learning_rate = lr;
        Ok(())
    }
}

/// One Adam update with decoupled weight decay.
///
/// Every parameter is first shrunk by `lr * wd`, then moved by the
/// bias-corrected moment ratio. `params.step_count` is incremented.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, state: &mut OptimizerState<T>) -> Result<()> {
    for (name, p) in params.iter() {
        if p.grad.is_none() {
            return Err(Error::State(format!("parameter {name} has no gradient")));
        }
    }
    let c = state.config;
    let t = (params.step_count + 1) as i32;
    let lr = T::lit(c.learning_rate);
    let decay = T::one() - T::lit(c.learning_rate * c.weight_decay);
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let corr1 = T::one() - T::lit(c.beta1.powi(t));
    let corr2 = T::one() - T::lit(c.beta2.powi(t));
    let eps = T::lit(c.epsilon);

    for (name, p) in params.iter_mut() {
        let grad = p.grad.as_ref().expect("checked above");
        let m = state
            .first_moment
            .entry(name.to_string())
            .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
        let v = state
            .second_moment
            .entry(name.to_string())
            .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
        if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
            return Err(shape_err!("moment shape mismatch for {name}"));
        }
        ndarray::Zip::from(&mut p.value)
            .and(grad)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let mhat = *m / corr1;
                let vhat = *v / corr2;
                *w = *w * decay - lr * mhat / (vhat.sqrt() + eps);
            });
    }
    params.step_count += 1;
    Ok(())
}
