//! Background-context discriminator: a patch discriminator over the
//! channel-stacked `[noisy input ; candidate]` pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    join, receptive_field, BatchNorm2d, Conv2d, ConvGeometry, LeakyRelu, Mode, Padding, Param,
    Parameters,
};
use crate::tensor::{Scalar, Tensor};

pub const PAIR_CHANNELS: usize = 6;
const KERNEL: usize = 4;
const LEAK: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbConfig {
    /// Widths of the body layers; all but the last use stride 2.
    pub layer_channels: Vec<usize>,
}

impl Default for DbConfig {
    fn default() -> Self {
        DbConfig {
            layer_channels: vec![64, 128, 256, 512],
        }
    }
}

impl DbConfig {
    pub fn scaled(base: usize) -> Self {
        DbConfig {
            layer_channels: vec![base, 2 * base, 4 * base, 8 * base],
        }
    }

    /// `(kernel, stride)` of every layer including the 1-channel head.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let n = self.layer_channels.len();
        (0..n)
            .map(|i| (KERNEL, if i + 1 == n { 1 } else { 2 }))
            .chain(std::iter::once((KERNEL, 1)))
            .collect()
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.layers())
    }

    /// Side of the score map produced for a `patch x patch` input.
    pub fn score_map_side(&self, patch: usize) -> Result<usize> {
        self.layers().iter().try_fold(patch, |side, &(k, s)| {
            ConvGeometry::new(side, side, k, s, Padding::Fixed(1)).map(|g| g.out_h)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_channels.is_empty() || self.layer_channels.contains(&0) {
            return Err(Error::config("D_b layer_channels must be non-empty and positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block<T> {
    conv: Conv2d<T>,
    norm: Option<BatchNorm2d<T>>,
    act: LeakyRelu<T>,
}

#[derive(Debug, Clone)]
pub struct BackgroundDiscriminator<T = f32> {
    config: DbConfig,
    body: Vec<Block<T>>,
    head: Conv2d<T>,
}

impl<T: Scalar> BackgroundDiscriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DbConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = config.layers();
        let mut body = Vec::new();
        let mut input = PAIR_CHANNELS;
        for (i, (&out, &(k, stride))) in config.layer_channels.iter().zip(&layers).enumerate() {
            let normed = i > 0;
            body.push(Block {
                conv: Conv2d::new(input, out, k, stride, Padding::Fixed(1), !normed, rng),
                norm: normed.then(|| BatchNorm2d::new(out, rng)),
                act: LeakyRelu::new(LEAK),
            });
            input = out;
        }
        let head = Conv2d::new(input, 1, KERNEL, 1, Padding::Fixed(1), true, rng);
        Ok(BackgroundDiscriminator { config, body, head })
    }

    pub fn config(&self) -> &DbConfig {
        &self.config
    }

    /// Raw (unsquashed) `N x 1 x M x M` score map.
    pub fn forward(&mut self, pair: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (_, c, _, _) = pair.dims4()?;
        if c != PAIR_CHANNELS {
            return Err(Error::shape(format!(
                "D_b expects {PAIR_CHANNELS}-channel stacked pairs, got {c}"
            )));
        }
        let mut x = pair.clone();
        for block in &mut self.body {
            x = block.conv.forward(&x)?;
            if let Some(norm) = &mut block.norm {
                x = norm.forward(&x, mode)?;
            }
            x = block.act.forward(&x);
        }
        self.head.forward(&x)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let mut g = self.head.backward(grad_out, param_grads)?;
        for block in self.body.iter_mut().rev() {
            g = block.act.backward(&g)?;
            if let Some(norm) = &mut block.norm {
                g = norm.backward(&g, param_grads)?;
            }
            g = block.conv.backward(&g, param_grads)?;
        }
        Ok(g)
    }
}

/// All-ones (real) or all-zeros (fake) target map.
pub fn patch_targets<T: Scalar>(side: usize, real: bool) -> Tensor<T> {
    let v = if real { T::one() } else { T::zero() };
    Tensor::full(&[1, side, side], v)
}

impl<T: Scalar> Parameters<T> for BackgroundDiscriminator<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, b) in self.body.iter().enumerate() {
            let p = join(prefix, &format!("layer{i}"));
            b.conv.visit_params(&join(&p, "conv"), f);
            if let Some(n) = &b.norm {
                n.visit_params(&join(&p, "norm"), f);
            }
        }
        self.head.visit_params(&join(prefix, "head"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, b) in self.body.iter_mut().enumerate() {
            let p = join(prefix, &format!("layer{i}"));
            b.conv.visit_params_mut(&join(&p, "conv"), f);
            if let Some(n) = &mut b.norm {
                n.visit_params_mut(&join(&p, "norm"), f);
            }
        }
        self.head.visit_params_mut(&join(prefix, "head"), f);
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (i, b) in self.body.iter().enumerate() {
            if let Some(n) = &b.norm {
                n.visit_buffers(&join(prefix, &format!("layer{i}.norm")), f);
            }
        }
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (i, b) in self.body.iter_mut().enumerate() {
            if let Some(n) = &mut b.norm {
                n.visit_buffers_mut(&join(prefix, &format!("layer{i}.norm")), f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Receptive field by explicit back-projection of a single output unit.
    fn backprojected_field(layers: &[(usize, usize)]) -> usize {
        // an output window of one unit covers `span` inputs of the previous layer
        layers
            .iter()
            .rev()
            .fold(1usize, |span, &(k, s)| (span - 1) * s + k)
    }

    #[test]
    fn default_layout_has_70px_field_and_30x30_map() {
        let cfg = DbConfig::default();
        assert_eq!(cfg.layers(), vec![(4, 2), (4, 2), (4, 2), (4, 1), (4, 1)]);
        assert_eq!(backprojected_field(&cfg.layers()), 70);
        assert_eq!(cfg.receptive_field(), 70);
        // 256 -> 128 -> 64 -> 32 -> 31 -> 30
        assert_eq!(cfg.score_map_side(256).unwrap(), 30);
        // 64 -> 32 -> 16 -> 8 -> 7 -> 6
        assert_eq!(cfg.score_map_side(64).unwrap(), 6);
    }

    #[test]
    fn forward_produces_the_predicted_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DbConfig::scaled(2);
        let mut d = BackgroundDiscriminator::<f32>::new(cfg.clone(), &mut rng).unwrap();
        let pair = Tensor::full(&[1, 6, 64, 64], 0.1);
        let map = d.forward(&pair, Mode::Train).unwrap();
        let m = cfg.score_map_side(64).unwrap();
        assert_eq!(map.shape(), &[1, 1, m, m]);
        assert!(d.forward(&Tensor::zeros(&[1, 3, 64, 64]), Mode::Train).is_err());
    }

    #[test]
    fn targets_are_constant_maps() {
        let real = patch_targets::<f32>(30, true);
        assert_eq!(real.sum(), 900.0);
        assert_eq!(patch_targets::<f32>(1, false).data(), &[0.0]);
    }

    #[test]
    fn score_map_translates_with_its_input() {
        // Eval mode with neutral statistics makes the network translation covariant.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = DbConfig {
            layer_channels: vec![3, 4],
        };
        let mut d = BackgroundDiscriminator::<f64>::new(cfg, &mut rng).unwrap();
        let stride = 2; // product of strides before the score map
        let (size, pad) = (24usize, 6usize);
        let mut base = Tensor::<f64>::full(&[1, 6, size, size], 0.3);
        let mut shifted = base.clone();
        for c in 0..6 {
            for y in pad..size - pad {
                for x in pad..size - pad - stride {
                    let v = ((c * 31 + y * 7 + x * 13) % 17) as f64 / 17.0 - 0.5;
                    base.data_mut()[(c * size + y) * size + x] = v;
                    shifted.data_mut()[(c * size + y) * size + x + stride] = v;
                }
            }
        }
        let a = d.forward(&base, Mode::Eval).unwrap();
        let b = d.forward(&shifted, Mode::Eval).unwrap();
        let m = a.shape()[3];
        // columns whose field avoids the zero border in both inputs
        for y in 0..m {
            for x in 3..=5 {
                let va = a.data()[y * m + x];
                let vb = b.data()[y * m + x + 1];
                assert!((va - vb).abs() < 1e-12, "({y},{x}): {va} vs {vb}");
            }
        }
    }
}
