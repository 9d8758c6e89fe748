use rand::Rng;

use super::init_normal;
use super::param::{join, Param, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer on `N x in` inputs, weight layout `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            weight: Param::new(init_normal(&[outputs, inputs], 0.0, 0.02, rng)),
            bias: Param::new(Tensor::zeros(&[outputs])),
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        let s = self.weight.value.shape();
        (s[0], s[1])
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (outputs, inputs) = self.dims();
        let [n, features] = *x.shape() else {
            return Err(Error::shape(format!("linear expects N x {inputs}, got {:?}", x.shape())));
        };
        if features != inputs {
            return Err(Error::shape(format!(
                "linear expects {inputs} features, got {features}"
            )));
        }
        let mut out = Tensor::zeros(&[n, outputs]);
        for row in out.data_mut().chunks_mut(outputs) {
            row.copy_from_slice(self.bias.value.data());
        }
        T::gemm(
            n,
            inputs,
            outputs,
            T::one(),
            x.data(),
            false,
            self.weight.value.data(),
            true,
            T::one(),
            out.data_mut(),
        );
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let (outputs, inputs) = self.dims();
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::shape("linear backward before forward"))?;
        let n = x.shape()[0];
        if grad_out.shape() != [n, outputs] {
            return Err(Error::shape("linear gradient shape mismatch"));
        }
        if param_grads {
            T::gemm(
                outputs,
                n,
                inputs,
                T::one(),
                grad_out.data(),
                true,
                x.data(),
                false,
                T::one(),
                self.weight.grad.data_mut(),
            );
            for row in grad_out.data().chunks(outputs) {
                for (g, &d) in self.bias.grad.data_mut().iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
        }
        let mut grad_in = Tensor::zeros(&[n, inputs]);
        T::gemm(
            n,
            outputs,
            inputs,
            T::one(),
            grad_out.data(),
            false,
            self.weight.value.data(),
            false,
            T::zero(),
            grad_in.data_mut(),
        );
        Ok(grad_in)
    }
}

impl<T: Scalar> Parameters<T> for Linear<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
