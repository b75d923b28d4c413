use indexmap::IndexMap;
use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView4, Dimension, Ix1, Ix2, Ix4, IxDyn};

use super::Real;
use crate::error::{Error, Result};

/// A learnable array and its gradient slot.
///
/// The slot is `None` until a backward pass (or [`ParamStore::zero_grad`])
/// populates it.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: ArrayD<T>,
    pub grad: Option<ArrayD<T>>,
}

/// Named, insertion-ordered collection of learnable arrays.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Param<T>>,
    pub step_count: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
            step_count: 0,
        }
    }

    /// Registers a parameter. Names must be unique.
    pub fn insert<D: Dimension>(&mut self, name: impl Into<String>, value: ndarray::Array<T, D>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::State(format!("duplicate parameter name {name}")));
        }
        self.entries.insert(
            name,
            Param {
                value: value.into_dyn(),
                grad: None,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::State(format!("unknown parameter {name}")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter {name}")))
    }

    pub fn value(&self, name: &str) -> Result<&ArrayD<T>> {
        Ok(&self.param(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut ArrayD<T>> {
        Ok(&mut self.param_mut(name)?.value)
    }

    pub fn v1(&self, name: &str) -> Result<ArrayView1<'_, T>> {
        self.typed::<Ix1>(name)
    }

    pub fn v2(&self, name: &str) -> Result<ArrayView2<'_, T>> {
        self.typed::<Ix2>(name)
    }

    pub fn v4(&self, name: &str) -> Result<ArrayView4<'_, T>> {
        self.typed::<Ix4>(name)
    }

    fn typed<D: Dimension>(&self, name: &str) -> Result<ndarray::ArrayView<'_, T, D>> {
        let value = self.value(name)?;
        value
            .view()
            .into_dimensionality::<D>()
            .map_err(|_| shape_err!("parameter {name} has shape {:?}", value.shape()))
    }

    pub fn grad(&self, name: &str) -> Result<Option<&ArrayD<T>>> {
        Ok(self.param(name)?.grad.as_ref())
    }

    /// Adds `g` into the gradient slot of `name`, creating it if empty.
    pub fn accumulate<D: Dimension>(&mut self, name: &str, g: ndarray::Array<T, D>) -> Result<()> {
        let p = self.param_mut(name)?;
        let g = g.into_dyn();
        if g.shape() != p.value.shape() {
            return Err(shape_err!(
                "gradient for {name} has shape {:?}, value has {:?}",
                g.shape(),
                p.value.shape()
            ));
        }
        match &mut p.grad {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    /// Sets every gradient slot to zeros of the value's shape.
    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            match &mut p.grad {
                Some(g) => g.fill(T::zero()),
                slot @ None => *slot = Some(ArrayD::zeros(p.value.raw_dim())),
            }
        }
    }

    /// Empties every gradient slot.
    pub fn clear_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad = None;
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    /// Converts every value to another precision; gradients are dropped.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        out.step_count = self.step_count;
        for (name, p) in &self.entries {
            let v: ArrayD<U> = p.value.mapv(|x| U::from_f64(x.to_f64().unwrap_or(0.0)).unwrap_or(U::zero()));
            out.entries.insert(name.clone(), Param { value: v, grad: None });
        }
        out
    }

    /// Shape of a parameter, for manifest emission.
    pub fn shape(&self, name: &str) -> Result<IxDyn> {
        Ok(self.value(name)?.raw_dim())
    }
}
