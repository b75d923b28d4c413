//! Central finite-difference verification of hand-written backward passes.

use ndarray::ArrayD;

use super::ParamStore;
use crate::error::{Error, Result};

/// A differentiable function of several 64-bit arrays.
pub trait GradOp {
    fn forward(&self, inputs: &[ArrayD<f64>]) -> Result<ArrayD<f64>>;

    /// Gradients of `<upstream, forward(inputs)>` with respect to each input.
    fn backward(&self, inputs: &[ArrayD<f64>], upstream: &ArrayD<f64>) -> Result<Vec<ArrayD<f64>>>;
}

/// Adapter turning a pair of closures into a [`GradOp`].
pub struct FnOp<F, B> {
    pub forward: F,
    pub backward: B,
}

impl<F, B> GradOp for FnOp<F, B>
where
    F: Fn(&[ArrayD<f64>]) -> Result<ArrayD<f64>>,
    B: Fn(&[ArrayD<f64>], &ArrayD<f64>) -> Result<Vec<ArrayD<f64>>>,
{
    fn forward(&self, inputs: &[ArrayD<f64>]) -> Result<ArrayD<f64>> {
        (self.forward)(inputs)
    }

    fn backward(&self, inputs: &[ArrayD<f64>], upstream: &ArrayD<f64>) -> Result<Vec<ArrayD<f64>>> {
        (self.backward)(inputs, upstream)
    }
}

/// Wraps a module whose parameters live in a [`ParamStore`]: input 0 is the
/// module input, inputs `1..` are the parameters in store order.
///
/// `backward` receives a fresh store with empty gradient slots, must
/// accumulate parameter gradients into it and return the input gradient.
pub struct ModuleOp<F, B> {
    pub store: ParamStore<f64>,
    pub forward: F,
    pub backward: B,
}

impl<F, B> ModuleOp<F, B> {
    /// Module input followed by the current parameter values.
    pub fn inputs(&self, x: &ArrayD<f64>) -> Vec<ArrayD<f64>> {
        std::iter::once(x.clone())
            .chain(self.store.iter().map(|(_, p)| p.value.clone()))
            .collect()
    }

    fn load(&self, inputs: &[ArrayD<f64>]) -> Result<ParamStore<f64>> {
        if inputs.len() != self.store.len() + 1 {
            return Err(shape_err!("{} inputs for a module with {} parameters", inputs.len(), self.store.len()));
        }
        let mut store = self.store.clone();
        store.clear_grad();
        for ((_, p), v) in store.iter_mut().zip(&inputs[1..]) {
            p.value = v.clone();
        }
        Ok(store)
    }
}

impl<F, B> GradOp for ModuleOp<F, B>
where
    F: Fn(&ParamStore<f64>, &ArrayD<f64>) -> Result<ArrayD<f64>>,
    B: Fn(&mut ParamStore<f64>, &ArrayD<f64>, &ArrayD<f64>) -> Result<ArrayD<f64>>,
{
    fn forward(&self, inputs: &[ArrayD<f64>]) -> Result<ArrayD<f64>> {
        let store = self.load(inputs)?;
        (self.forward)(&store, &inputs[0])
    }

    fn backward(&self, inputs: &[ArrayD<f64>], upstream: &ArrayD<f64>) -> Result<Vec<ArrayD<f64>>> {
        let mut store = self.load(inputs)?;
        let dx = (self.backward)(&mut store, &inputs[0], upstream)?;
        let mut out = vec![dx];
        for (_, p) in store.iter() {
            out.push(p.grad.clone().unwrap_or_else(|| ArrayD::zeros(p.value.raw_dim())));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputReport {
    pub index: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tol: f64,
    pub inputs: Vec<InputReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.inputs.iter().all(|r| !r.flagged)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.inputs.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }
}

pub const DEFAULT_EPS: f64 = 1e-3;

/// Checks the op reduced by a plain sum of its outputs.
pub fn grad_check(op: &dyn GradOp, inputs: &[ArrayD<f64>], eps: f64, tol: f64) -> Result<GradCheckReport> {
    let out = op.forward(inputs)?;
    let ones = ArrayD::ones(out.raw_dim());
    grad_check_weighted(op, inputs, &ones, eps, tol)
}

/// Checks the op reduced by `sum(cotangent * output)`.
///
/// Element errors are `|analytic - numeric| / max(|analytic|, |numeric|, floor)`
/// where `floor` is `1e-3` of the largest numeric gradient of that input, so
/// entries many orders below the input's gradient scale cannot dominate.
pub fn grad_check_weighted(
    op: &dyn GradOp,
    inputs: &[ArrayD<f64>],
    cotangent: &ArrayD<f64>,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let objective = |xs: &[ArrayD<f64>]| -> Result<f64> {
        let y = op.forward(xs)?;
        if y.shape() != cotangent.shape() {
            return Err(shape_err!("cotangent {:?} vs output {:?}", cotangent.shape(), y.shape()));
        }
        let v: f64 = (&y * cotangent).sum();
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite forward value during gradient check".into()));
        }
        Ok(v)
    };
    objective(inputs)?;
    let analytic = op.backward(inputs, cotangent)?;
    if analytic.len() != inputs.len() {
        return Err(shape_err!("backward returned {} gradients for {} inputs", analytic.len(), inputs.len()));
    }

    let mut work: Vec<ArrayD<f64>> = inputs.to_vec();
    let mut reports = Vec::with_capacity(inputs.len());
    for (idx, a) in analytic.iter().enumerate() {
        if a.shape() != inputs[idx].shape() {
            return Err(shape_err!("gradient {idx} has shape {:?}", a.shape()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite analytic gradient for input {idx}")));
        }
        let mut numeric = Vec::with_capacity(a.len());
        for k in 0..a.len() {
            let orig = work[idx].as_slice_memory_order().expect("contiguous")[k];
            work[idx].as_slice_memory_order_mut().expect("contiguous")[k] = orig + eps;
            let plus = objective(&work)?;
            work[idx].as_slice_memory_order_mut().expect("contiguous")[k] = orig - eps;
            let minus = objective(&work)?;
            work[idx].as_slice_memory_order_mut().expect("contiguous")[k] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-3 * scale).max(1e-8);
        let (mut rel, mut abs) = (0.0f64, 0.0f64);
        for (an, nu) in a.as_slice_memory_order().expect("contiguous").iter().zip(&numeric) {
            let e = (an - nu).abs();
            abs = abs.max(e);
            rel = rel.max(e / an.abs().max(nu.abs()).max(floor));
        }
        reports.push(InputReport {
            index: idx,
            max_rel_error: rel,
            max_abs_error: abs,
            flagged: rel > tol,
        });
    }
    Ok(GradCheckReport { tol, inputs: reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, IxDyn};

    fn square_op(factor: f64) -> impl GradOp {
        FnOp {
            forward: |xs: &[ArrayD<f64>]| Ok(xs[0].mapv(|v| v * v)),
            backward: move |xs: &[ArrayD<f64>], up: &ArrayD<f64>| Ok(vec![&xs[0] * up * 2.0 * factor]),
        }
    }

    #[test]
    fn correct_backward_passes() {
        let x = arr1(&[0.3, -1.2, 2.0]).into_dyn();
        let r = grad_check(&square_op(1.0), &[x], 1e-4, 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn corrupted_backward_is_flagged() {
        let x = arr1(&[0.3, -1.2, 2.0]).into_dyn();
        let r = grad_check(&square_op(2.0), &[x], 1e-4, 1e-4).unwrap();
        assert!(!r.passed());
        assert!(r.inputs[0].flagged);
    }

    #[test]
    fn non_finite_forward_is_numerical_error() {
        let op = FnOp {
            forward: |xs: &[ArrayD<f64>]| Ok(xs[0].mapv(f64::ln)),
            backward: |xs: &[ArrayD<f64>], up: &ArrayD<f64>| Ok(vec![up / &xs[0]]),
        };
        let x = ArrayD::from_elem(IxDyn(&[2]), -1.0);
        assert!(matches!(grad_check(&op, &[x], 1e-3, 1e-4), Err(Error::Numerical(_))));
    }
}
