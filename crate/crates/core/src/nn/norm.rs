use rand::Rng;

use super::init_normal;
use super::param::{join, Mode, Param, Parameters};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const MOMENTUM: f64 = 0.1;
const EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
struct NormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
    shape: [usize; 4],
}

/// Per-channel batch normalization over `N x H x W`.
///
/// Train mode normalizes with batch statistics and folds them into the
/// running averages (unbiased variance); eval mode uses the running averages.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    channels: usize,
    cache: Option<NormCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        BatchNorm2d {
            gamma: Param::new(init_normal(&[channels], 1.0, 0.02, rng)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels {
            return Err(Error::shape(format!(
                "batch norm expects {} channels, got {c}",
                self.channels
            )));
        }
        let plane = h * w;
        let count = n * plane;
        let count_t = T::from_usize(count).unwrap();
        let eps = T::lit(EPS);
        let momentum = T::lit(MOMENTUM);
        let mut out = Tensor::zeros(x.shape());
        let mut normalized = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        let data = x.data();
        for ch in 0..c {
            let values = || (0..n).flat_map(move |s| (0..plane).map(move |p| (s * c + ch) * plane + p));
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = values().map(|i| data[i]).sum::<T>() / count_t;
                    let var = values()
                        .map(|i| {
                            let d = data[i] - mean;
                            d * d
                        })
                        .sum::<T>()
                        / count_t;
                    let unbiased = if count > 1 {
                        var * count_t / T::from_usize(count - 1).unwrap()
                    } else {
                        var
                    };
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = (T::one() - momentum) * *rm + momentum * mean;
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = (T::one() - momentum) * *rv + momentum * unbiased;
                    (mean, var)
                }
                Mode::Eval => (
                    self.running_mean.data()[ch],
                    self.running_var.data()[ch],
                ),
            };
            let istd = T::one() / (var + eps).sqrt();
            inv_std[ch] = istd;
            let gamma = self.gamma.value.data()[ch];
            let beta = self.beta.value.data()[ch];
            for i in values() {
                let xhat = (data[i] - mean) * istd;
                normalized[i] = xhat;
                out.data_mut()[i] = gamma * xhat + beta;
            }
        }
        self.cache = Some(NormCache {
            normalized,
            inv_std,
            mode,
            shape: [n, c, h, w],
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::shape("batch norm backward before forward"))?;
        let [n, c, h, w] = cache.shape;
        if grad_out.shape() != cache.shape {
            return Err(Error::shape("batch norm gradient shape mismatch"));
        }
        let plane = h * w;
        let count_t = T::from_usize(n * plane).unwrap();
        let dy = grad_out.data();
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let idx = || (0..n).flat_map(move |s| (0..plane).map(move |p| (s * c + ch) * plane + p));
            let sum_dy: T = idx().map(|i| dy[i]).sum();
            let sum_dy_xhat: T = idx().map(|i| dy[i] * cache.normalized[i]).sum();
            if param_grads {
                let gg = &mut self.gamma.grad.data_mut()[ch];
                *gg = *gg + sum_dy_xhat;
                let gb = &mut self.beta.grad.data_mut()[ch];
                *gb = *gb + sum_dy;
            }
            let gamma = self.gamma.value.data()[ch];
            let istd = cache.inv_std[ch];
            let gi = grad_in.data_mut();
            match cache.mode {
                Mode::Train => {
                    let scale = gamma * istd / count_t;
                    for i in idx() {
                        gi[i] = scale
                            * (count_t * dy[i] - sum_dy - cache.normalized[i] * sum_dy_xhat);
                    }
                }
                Mode::Eval => {
                    for i in idx() {
                        gi[i] = dy[i] * gamma * istd;
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

impl<T: Scalar> Parameters<T> for BatchNorm2d<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_mode_output_has_zero_mean_unit_variance_before_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bn = BatchNorm2d::<f64>::new(2, &mut rng);
        bn.gamma.value.fill(1.0);
        let x = Tensor::from_vec(&[2, 2, 1, 3], (0..12).map(|v| (v * v) as f64).collect())
            .unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|s| (0..3).map(move |p| (s * 2 + ch) * 3 + p))
                .map(|i| y.data()[i])
                .collect();
            let mean = vals.iter().sum::<f64>() / 6.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn eval_mode_does_not_touch_running_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bn = BatchNorm2d::<f32>::new(1, &mut rng);
        let x = Tensor::full(&[1, 1, 2, 2], 3.0);
        bn.forward(&x, Mode::Eval).unwrap();
        assert_eq!(bn.running_mean.data(), &[0.0]);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.data()[0] - 0.3).abs() < 1e-6);
    }
}
