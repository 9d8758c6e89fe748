use crate::tensor::{Scalar, Tensor};

/// A learnable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }
}

/// Forward-pass behaviour of normalization layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated.
    Train,
    /// Running averages, nothing mutated.
    Eval,
}

/// Named traversal over learnable parameters and non-learnable buffers.
///
/// Visit order is fixed by construction; optimizers and checkpoints rely on it.
pub trait Parameters<T: Scalar> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn visit_buffers(&self, _prefix: &str, _f: &mut dyn FnMut(&str, &Tensor<T>)) {}
    fn visit_buffers_mut(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut Tensor<T>)) {}

    fn zero_grad(&mut self) {
        self.visit_params_mut("", &mut |_, p| p.grad.fill(T::zero()));
    }

    fn param_count(&self) -> usize {
        let mut total = 0;
        self.visit_params("", &mut |_, p| total += p.value.len());
        total
    }

    fn params_finite(&self) -> bool {
        let mut ok = true;
        self.visit_params("", &mut |_, p| ok &= p.value.all_finite());
        self.visit_buffers("", &mut |_, b| ok &= b.all_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
