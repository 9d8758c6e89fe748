//! U-Net generator: a strided encoder whose activations are mirrored into a
//! transposed-convolution decoder through channel-concatenating skip connections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    join, BatchNorm2d, Conv2d, ConvTranspose2d, LeakyRelu, Mode, Padding, Param, Parameters, Tanh,
};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Number of down/up pairs; the input side must be `2^levels`.
    pub levels: usize,
    pub base_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            levels: 8,
            base_channels: 64,
        }
    }
}

impl GeneratorConfig {
    pub fn for_patch(patch: usize, base_channels: usize) -> Result<Self> {
        if !patch.is_power_of_two() || patch < 4 {
            return Err(Error::config(format!(
                "patch side {patch} is not a power of two >= 4"
            )));
        }
        Ok(GeneratorConfig {
            levels: patch.trailing_zeros() as usize,
            base_channels,
        })
    }

    pub fn patch_size(&self) -> usize {
        1 << self.levels
    }

    /// Encoder width at `level`: base, 2x, 4x, then capped at 8x.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels * (1usize << level.min(3))
    }

    pub fn validate(&self, patch: usize) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::config("generator needs at least 2 levels"));
        }
        if self.base_channels == 0 {
            return Err(Error::config("generator base_channels must be >= 1"));
        }
        if patch != self.patch_size() {
            return Err(Error::config(format!(
                "patch side {patch} != 2^{} = {}",
                self.levels,
                self.patch_size()
            )));
        }
        Ok(())
    }
}

const LEAK: f64 = 0.2;

#[derive(Debug, Clone)]
struct EncoderLevel<T> {
    act: Option<LeakyRelu<T>>,
    conv: Conv2d<T>,
    norm: Option<BatchNorm2d<T>>,
}

#[derive(Debug, Clone)]
struct DecoderLevel<T> {
    act: LeakyRelu<T>,
    conv: ConvTranspose2d<T>,
    norm: Option<BatchNorm2d<T>>,
}

/// Parameters and per-layer caches of the U-Net.
#[derive(Debug, Clone)]
pub struct Generator<T = f32> {
    config: GeneratorConfig,
    encoder: Vec<EncoderLevel<T>>,
    decoder: Vec<DecoderLevel<T>>,
    output: Tanh<T>,
    skip_channels: Vec<usize>,
}

/// Hook over encoder activations `e_level` before they feed the next level and the skip.
pub type EncoderTap<'a, T> = &'a mut dyn FnMut(usize, &mut Tensor<T>);

impl<T: Scalar> Generator<T> {
    /// Gaussian(0, 0.02) initialization; batch-norm scales around 1.
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate(config.patch_size())?;
        let levels = config.levels;
        let innermost = levels - 1;
        let mut encoder = Vec::with_capacity(levels);
        for level in 0..levels {
            let input = if level == 0 { 3 } else { config.channels(level - 1) };
            let out = config.channels(level);
            let normed = level != 0 && level != innermost;
            encoder.push(EncoderLevel {
                act: (level > 0).then(|| LeakyRelu::new(LEAK)),
                conv: Conv2d::new(input, out, 4, 2, Padding::Fixed(1), !normed, rng),
                norm: normed.then(|| BatchNorm2d::new(out, rng)),
            });
        }
        let mut decoder = Vec::with_capacity(levels);
        for level in 0..levels {
            let input = if level == innermost {
                config.channels(level)
            } else {
                2 * config.channels(level)
            };
            let out = if level == 0 { 3 } else { config.channels(level - 1) };
            let normed = level != 0;
            decoder.push(DecoderLevel {
                act: LeakyRelu::relu(),
                conv: ConvTranspose2d::new(input, out, 4, 2, 1, !normed, rng),
                norm: normed.then(|| BatchNorm2d::new(out, rng)),
            });
        }
        Ok(Generator {
            config,
            encoder,
            decoder,
            output: Tanh::new(),
            skip_channels: Vec::new(),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Maps `N x 3 x P x P` in `[-1, 1]` to `N x 3 x P x P` in `(-1, 1)`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.forward_tapped(x, mode, None)
    }

    pub fn forward_tapped(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        mut tap: Option<EncoderTap<'_, T>>,
    ) -> Result<Tensor<T>> {
        let (_, c, h, w) = x.dims4()?;
        let p = self.config.patch_size();
        if c != 3 || h != p || w != p {
            return Err(Error::shape(format!(
                "generator expects N x 3 x {p} x {p}, got {:?}",
                x.shape()
            )));
        }
        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(self.config.levels);
        let mut current = x.clone();
        for (level, enc) in self.encoder.iter_mut().enumerate() {
            let input = match &mut enc.act {
                Some(act) => act.forward(&current),
                None => current,
            };
            let mut e = enc.conv.forward(&input)?;
            if let Some(norm) = &mut enc.norm {
                e = norm.forward(&e, mode)?;
            }
            if let Some(tap) = tap.as_mut() {
                tap(level, &mut e);
            }
            current = e.clone();
            skips.push(e);
        }
        let innermost = self.config.levels - 1;
        let mut up = skips.pop().expect("at least two levels");
        self.skip_channels.clear();
        for level in (0..self.config.levels).rev() {
            let dec = &mut self.decoder[level];
            let input = if level == innermost {
                up
            } else {
                let skip = skips.pop().expect("one skip per level");
                self.skip_channels.push(skip.shape()[1]);
                Tensor::cat_channels(&skip, &up)?
            };
            let activated = dec.act.forward(&input);
            let mut d = dec.conv.forward(&activated)?;
            if let Some(norm) = &mut dec.norm {
                d = norm.forward(&d, mode)?;
            }
            up = d;
        }
        Ok(self.output.forward(&up))
    }

    /// Backpropagates `d loss / d output`; returns `d loss / d input`.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let innermost = self.config.levels - 1;
        let mut grad = self.output.backward(grad_out)?;
        // Gradients flowing into each encoder activation through its skip.
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; self.config.levels];
        let mut skip_iter = self.skip_channels.iter().rev();
        for level in 0..self.config.levels {
            let dec = &mut self.decoder[level];
            if let Some(norm) = &mut dec.norm {
                grad = norm.backward(&grad, true)?;
            }
            grad = dec.conv.backward(&grad, true)?;
            grad = dec.act.backward(&grad)?;
            if level != innermost {
                let channels = *skip_iter.next().expect("skip recorded in forward");
                let (skip, up) = grad.split_channels(channels)?;
                skip_grads[level] = Some(skip);
                grad = up;
            }
        }
        // `grad` now holds d/d e_innermost from the decoder path.
        for level in (0..self.config.levels).rev() {
            if let Some(skip) = skip_grads[level].take() {
                grad.add_assign(&skip)?;
            }
            let enc = &mut self.encoder[level];
            if let Some(norm) = &mut enc.norm {
                grad = norm.backward(&grad, true)?;
            }
            grad = enc.conv.backward(&grad, true)?;
            if let Some(act) = &enc.act {
                grad = act.backward(&grad)?;
            }
        }
        Ok(grad)
    }
}

impl<T: Scalar> Parameters<T> for Generator<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, enc) in self.encoder.iter().enumerate() {
            let p = join(prefix, &format!("enc{i}"));
            enc.conv.visit_params(&join(&p, "conv"), f);
            if let Some(n) = &enc.norm {
                n.visit_params(&join(&p, "norm"), f);
            }
        }
        for (i, dec) in self.decoder.iter().enumerate() {
            let p = join(prefix, &format!("dec{i}"));
            dec.conv.visit_params(&join(&p, "conv"), f);
            if let Some(n) = &dec.norm {
                n.visit_params(&join(&p, "norm"), f);
            }
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, enc) in self.encoder.iter_mut().enumerate() {
            let p = join(prefix, &format!("enc{i}"));
            enc.conv.visit_params_mut(&join(&p, "conv"), f);
            if let Some(n) = &mut enc.norm {
                n.visit_params_mut(&join(&p, "norm"), f);
            }
        }
        for (i, dec) in self.decoder.iter_mut().enumerate() {
            let p = join(prefix, &format!("dec{i}"));
            dec.conv.visit_params_mut(&join(&p, "conv"), f);
            if let Some(n) = &mut dec.norm {
                n.visit_params_mut(&join(&p, "norm"), f);
            }
        }
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        for (i, enc) in self.encoder.iter().enumerate() {
            if let Some(n) = &enc.norm {
                n.visit_buffers(&join(prefix, &format!("enc{i}.norm")), f);
            }
        }
        for (i, dec) in self.decoder.iter().enumerate() {
            if let Some(n) = &dec.norm {
                n.visit_buffers(&join(prefix, &format!("dec{i}.norm")), f);
            }
        }
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (i, enc) in self.encoder.iter_mut().enumerate() {
            if let Some(n) = &mut enc.norm {
                n.visit_buffers_mut(&join(prefix, &format!("enc{i}.norm")), f);
            }
        }
        for (i, dec) in self.decoder.iter_mut().enumerate() {
            if let Some(n) = &mut dec.norm {
                n.visit_buffers_mut(&join(prefix, &format!("dec{i}.norm")), f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(p: usize, n: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = n * 3 * p * p;
        Tensor::from_vec(&[n, 3, p, p], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn bottleneck_reaches_one_pixel() {
        for (p, levels) in [(256usize, 8usize), (64, 6), (8, 3)] {
            assert_eq!(p >> levels, 1);
            assert_eq!(GeneratorConfig::for_patch(p, 4).unwrap().levels, levels);
        }
        let cfg = GeneratorConfig {
            levels: 8,
            base_channels: 64,
        };
        assert!(cfg.validate(128).is_err());
        assert!(cfg.validate(256).is_ok());
        assert_eq!(
            (0..8).map(|l| cfg.channels(l)).collect::<Vec<_>>(),
            vec![64, 128, 256, 512, 512, 512, 512, 512]
        );
    }

    #[test]
    fn forward_keeps_shape_and_tanh_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = GeneratorConfig {
            levels: 6,
            base_channels: 4,
        };
        let mut g = Generator::<f32>::new(cfg, &mut rng).unwrap();
        let x = input(64, 1, 1);
        let y = g.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[1, 3, 64, 64]);
        assert!(y.data().iter().all(|v| v.is_finite() && v.abs() < 1.0));
        assert!(g.forward(&input(32, 1, 1), Mode::Eval).is_err());
    }

    #[test]
    fn eval_batch_matches_single_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = GeneratorConfig {
            levels: 4,
            base_channels: 4,
        };
        let mut g = Generator::<f32>::new(cfg, &mut rng).unwrap();
        // populate running statistics
        g.forward(&input(16, 2, 9), Mode::Train).unwrap();
        let batch = input(16, 2, 3);
        let joint = g.forward(&batch, Mode::Eval).unwrap();
        for s in 0..2 {
            let single = g
                .forward(&batch.sample(s).unwrap().unsqueeze0(), Mode::Eval)
                .unwrap();
            assert_eq!(single.data(), joint.sample(s).unwrap().data());
        }
    }

    #[test]
    fn every_encoder_level_feeds_its_mirrored_decoder() {
        let cfg = GeneratorConfig {
            levels: 3,
            base_channels: 4,
        };
        let mut g = Generator::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let x = input(8, 1, 5).cast::<f64>();
        let baseline = g.forward(&x, Mode::Eval).unwrap();
        for level in 0..cfg.levels {
            let mut zero = |l: usize, e: &mut Tensor<f64>| {
                if l == level {
                    e.fill(0.0);
                }
            };
            let out = g.forward_tapped(&x, Mode::Eval, Some(&mut zero)).unwrap();
            assert_ne!(out, baseline, "zeroing level {level} had no effect");
        }
        // the skip is the concatenated first half of each non-innermost decoder input
        assert_eq!(g.skip_channels, vec![8, 4]);
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let cfg = GeneratorConfig {
            levels: 3,
            base_channels: 4,
        };
        let a = Generator::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = Generator::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        // enc: 3*4*16+4 | 4*8*16 + 2*8 | 8*16*16+16
        // dec: 8*3*16+3 | 16*4*16 + 2*4 | 16*8*16 + 2*8
        let expected = (192 + 4) + (512 + 16) + (2048 + 16) + (384 + 3) + (1024 + 8) + (2048 + 16);
        assert_eq!(a.param_count(), expected);
    }
}
