use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::layers::Conv;
use super::unit::{CadtCache, CadtUnit};
use crate::error::Result;
use crate::tensorcore::{ParamInit, ParamStore, Real};

/// Shape of the noise-extraction network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub groups: usize,
    pub units_per_group: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub heads: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
    #[serde(default = "yes")]
    pub enable_global: bool,
    #[serde(default = "yes")]
    pub enable_local: bool,
    pub image_channels: usize,
}

fn default_mlp_ratio() -> usize {
    2
}

fn yes() -> bool {
    true
}

impl StackConfig {
    pub fn paper(image_channels: usize) -> Self {
        Self {
            groups: 3,
            units_per_group: 6,
            embed_dim: 60,
            window: 8,
            heads: 6,
            mlp_ratio: 2,
            enable_global: true,
            enable_local: true,
            image_channels,
        }
    }

    pub fn toy(image_channels: usize) -> Self {
        Self {
            groups: 1,
            units_per_group: 2,
            embed_dim: 16,
            window: 4,
            heads: 2,
            mlp_ratio: 2,
            enable_global: true,
            enable_local: true,
            image_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.embed_dim;
        if self.groups == 0 || self.units_per_group == 0 {
            return Err(config_err!("groups and units_per_group must be at least 1"));
        }
        if self.image_channels == 0 || self.window == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return Err(config_err!("image_channels, window, heads and mlp_ratio must be positive"));
        }
        if c == 0 || c % self.heads != 0 {
            return Err(config_err!("embed_dim {c} must be a positive multiple of heads {}", self.heads));
        }
        if self.enable_local && c < 8 {
            return Err(config_err!("embed_dim {c} must be at least 8 with the local branch"));
        }
        if !self.enable_global && !self.enable_local {
            return Err(config_err!("enable_global and enable_local cannot both be false"));
        }
        Ok(())
    }

    pub fn num_units(&self) -> usize {
        self.groups * self.units_per_group
    }
}

/// Head conv, residual groups of units, tail conv. Output is the noise
/// estimate in image space.
#[derive(Debug, Clone)]
pub struct CadtStack {
    pub config: StackConfig,
    pub head: Conv,
    pub groups: Vec<Vec<CadtUnit>>,
    pub tail: Conv,
}

#[derive(Debug, Clone)]
pub struct StackCache<T> {
    input: Array4<T>,
    units: Vec<Vec<CadtCache<T>>>,
    features: Array4<T>,
}

impl CadtStack {
    pub fn new(config: StackConfig) -> Result<Self> {
        config.validate()?;
        let c = config.embed_dim;
        let groups = (0..config.groups)
            .map(|g| {
                (0..config.units_per_group)
                    .map(|u| {
                        CadtUnit::new(
                            format!("group{g}.unit{u}"),
                            c,
                            config.window,
                            config.heads,
                            config.mlp_ratio,
                            config.enable_global,
                            config.enable_local,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            head: Conv::new("head", config.image_channels, c),
            tail: Conv::new("tail", c, config.image_channels),
            groups,
            config,
        })
    }

    pub fn units(&self) -> impl Iterator<Item = &CadtUnit> {
        self.groups.iter().flatten()
    }

    /// The tail starts at zero so a fresh stack predicts no noise.
    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, init: &ParamInit) -> Result<()> {
        self.head.init(store, init, false)?;
        for u in self.units() {
            u.init(store, init)?;
        }
        self.tail.init(store, init, true)
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Array4<T>) -> Result<(Array4<T>, StackCache<T>)> {
        if x.dim().3 != self.config.image_channels {
            return Err(shape_err!(
                "stack expects {} image channels, got {}",
                self.config.image_channels,
                x.dim().3
            ));
        }
        let mut h = self.head.forward(store, x)?;
        let mut caches = Vec::with_capacity(self.groups.len());
        for group in &self.groups {
            let group_in = h.clone();
            let mut cs = Vec::with_capacity(group.len());
            for unit in group {
                let (y, c) = unit.forward(store, &h)?;
                cs.push(c);
                h = y;
            }
            h += &group_in;
            caches.push(cs);
        }
        let noise = self.tail.forward(store, &h)?;
        Ok((
            noise,
            StackCache {
                input: x.clone(),
                units: caches,
                features: h,
            },
        ))
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. the image.
    pub fn backward<T: Real>(&self, store: &mut ParamStore<T>, cache: &StackCache<T>, dnoise: &Array4<T>) -> Result<Array4<T>> {
        let mut d = self.tail.backward(store, &cache.features, dnoise)?;
        for (group, cs) in self.groups.iter().zip(&cache.units).rev() {
            let skip = d.clone();
            for (unit, c) in group.iter().zip(cs).rev() {
                d = unit.backward(store, c, &d)?;
            }
            d += &skip;
        }
        self.head.backward(store, &cache.input, &d)
    }
}
