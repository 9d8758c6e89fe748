use serde::{Deserialize, Serialize};

use super::param::Parameters;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one network.
///
/// Moment slots follow the network's parameter visit order.
#[derive(Debug, Clone)]
pub struct Adam<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<M: Parameters<T> + ?Sized>(config: AdamConfig, module: &M) -> Self {
        let mut first = Vec::new();
        module.visit_params("", &mut |_, p| first.push(Tensor::zeros(p.value.shape())));
        let second = first.clone();
        Adam {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn update<M: Parameters<T> + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let lr = T::lit(self.config.lr);
        let eps = T::lit(self.config.eps);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let mut slot = 0;
        let mut shape_error = None;
        let (first, second) = (&mut self.first, &mut self.second);
        module.visit_params_mut("", &mut |name, p| {
            let (Some(m), Some(v)) = (first.get_mut(slot), second.get_mut(slot)) else {
                shape_error = Some(format!("no optimizer slot for {name}"));
                return;
            };
            slot += 1;
            if m.shape() != p.value.shape() {
                shape_error = Some(format!("optimizer slot shape mismatch for {name}"));
                return;
            }
            let values = p.value.data_mut();
            let grads = p.grad.data();
            for (((w, &g), mi), vi) in values
                .iter_mut()
                .zip(grads)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
        match shape_error {
            Some(msg) => Err(Error::shape(msg)),
            None if slot != self.first.len() => Err(Error::shape("optimizer slot count mismatch")),
            None => Ok(()),
        }
    }
}
