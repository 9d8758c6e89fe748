//! Pedestrian discriminator: a strided conv stack over a variable-size crop,
//! spatial pyramid pooling to a fixed-length vector, and a linear head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    join, sigmoid, BatchNorm2d, Conv2d, ConvGeometry, LeakyRelu, Linear, Mode, Padding, Param,
    Parameters, Resize,
};
use crate::tensor::{Scalar, Tensor};

const KERNEL: usize = 4;
const LEAK: f64 = 0.2;

/// Pyramid grid sides, e.g. `[1, 2, 4]` for 1 + 4 + 16 = 21 bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SppLevels(pub Vec<usize>);

impl Default for SppLevels {
    fn default() -> Self {
        SppLevels(vec![1, 2, 4])
    }
}

impl SppLevels {
    pub fn total_bins(&self) -> usize {
        self.0.iter().map(|n| n * n).sum()
    }
}

/// Half-open range `[floor(i*len/n), ceil((i+1)*len/n))`, never empty for `len >= 1`.
pub fn bin_range(i: usize, n: usize, len: usize) -> std::ops::Range<usize> {
    (i * len / n)..((i + 1) * len).div_ceil(n)
}

/// Pyramid max pooling with argmax bookkeeping for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct SpatialPyramidPool {
    levels: SppLevels,
    argmax: Vec<usize>,
    input_shape: [usize; 3],
}

impl SpatialPyramidPool {
    pub fn new(levels: SppLevels) -> Self {
        SpatialPyramidPool {
            levels,
            argmax: Vec::new(),
            input_shape: [0; 3],
        }
    }

    /// Pools a `C x H x W` map into `C * bins` values: level by level, then
    /// channel-major, then bins row-major.
    pub fn forward<T: Scalar>(&mut self, featmap: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, h, w) = featmap.dims3()?;
        if h == 0 || w == 0 {
            return Err(Error::shape("spatial pyramid pooling needs H, W >= 1"));
        }
        let data = featmap.data();
        let total = c * self.levels.total_bins();
        let mut out = Vec::with_capacity(total);
        self.argmax.clear();
        self.argmax.reserve(total);
        for &n in &self.levels.0 {
            for ch in 0..c {
                let plane = &data[ch * h * w..(ch + 1) * h * w];
                for i in 0..n {
                    for j in 0..n {
                        let mut best = usize::MAX;
                        for row in bin_range(i, n, h) {
                            for col in bin_range(j, n, w) {
                                let idx = row * w + col;
                                if best == usize::MAX || plane[idx] > plane[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(plane[best]);
                        self.argmax.push(ch * h * w + best);
                    }
                }
            }
        }
        self.input_shape = [c, h, w];
        Tensor::from_vec(&[total], out)
    }

    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.len() != self.argmax.len() {
            return Err(Error::shape("pyramid pooling gradient length mismatch"));
        }
        let mut grad = Tensor::zeros(&self.input_shape);
        let g = grad.data_mut();
        for (&idx, &d) in self.argmax.iter().zip(grad_out.data()) {
            g[idx] = g[idx] + d;
        }
        Ok(grad)
    }
}

/// Stateless form of [`SpatialPyramidPool::forward`].
pub fn spp_pool<T: Scalar>(featmap: &Tensor<T>, levels: &SppLevels) -> Result<Tensor<T>> {
    SpatialPyramidPool::new(levels.clone()).forward(featmap)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpConfig {
    pub layer_channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub spp: SppLevels,
    /// With pyramid pooling off, crops are resized to this square side instead.
    pub spp_enabled: bool,
    pub fixed_input: usize,
    pub min_crop: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            layer_channels: vec![64, 128, 256, 512, 512],
            strides: vec![2, 2, 2, 1, 1],
            spp: SppLevels::default(),
            spp_enabled: true,
            fixed_input: 64,
            min_crop: 16,
        }
    }
}

impl DpConfig {
    pub fn scaled(base: usize) -> Self {
        DpConfig {
            layer_channels: vec![base, 2 * base, 4 * base, 8 * base, 8 * base],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_channels.is_empty() || self.layer_channels.contains(&0) {
            return Err(Error::config("D_p layer_channels must be non-empty and positive"));
        }
        if self.strides.len() != self.layer_channels.len() || self.strides.contains(&0) {
            return Err(Error::config("D_p needs one positive stride per layer"));
        }
        if self.spp_enabled && (self.spp.0.is_empty() || self.spp.0.contains(&0)) {
            return Err(Error::config("pyramid levels must be positive"));
        }
        if !self.spp_enabled && self.fixed_input == 0 {
            return Err(Error::config("fixed_input must be positive"));
        }
        Ok(())
    }

    fn last_channels(&self) -> usize {
        *self.layer_channels.last().expect("validated non-empty")
    }

    /// Length of the vector fed to the linear head.
    pub fn feature_len(&self) -> Result<usize> {
        if self.spp_enabled {
            return Ok(self.last_channels() * self.spp.total_bins());
        }
        let side = self.strides.iter().try_fold(self.fixed_input, |side, &s| {
            ConvGeometry::new(side, side, KERNEL, s, Padding::Same).map(|g| g.out_h)
        })?;
        Ok(self.last_channels() * side * side)
    }
}

#[derive(Debug, Clone)]
struct Block<T> {
    conv: Conv2d<T>,
    norm: Option<BatchNorm2d<T>>,
    act: LeakyRelu<T>,
}

#[derive(Debug, Clone)]
pub struct PedestrianDiscriminator<T = f32> {
    config: DpConfig,
    resize: Option<Resize>,
    body: Vec<Block<T>>,
    pool: SpatialPyramidPool,
    head: Linear<T>,
    feature_shape: Vec<usize>,
}

impl<T: Scalar> PedestrianDiscriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut body = Vec::new();
        let mut input = 3;
        for (i, (&out, &stride)) in config.layer_channels.iter().zip(&config.strides).enumerate() {
            let normed = i > 0;
            body.push(Block {
                conv: Conv2d::new(input, out, KERNEL, stride, Padding::Same, !normed, rng),
                norm: normed.then(|| BatchNorm2d::new(out, rng)),
                act: LeakyRelu::new(LEAK),
            });
            input = out;
        }
        let head = Linear::new(config.feature_len()?, 1, rng);
        Ok(PedestrianDiscriminator {
            resize: (!config.spp_enabled)
                .then(|| Resize::new(config.fixed_input, config.fixed_input)),
            pool: SpatialPyramidPool::new(config.spp.clone()),
            config,
            body,
            head,
            feature_shape: Vec::new(),
        })
    }

    pub fn config(&self) -> &DpConfig {
        &self.config
    }

    /// Raw score of one `3 x h x w` crop; the probability is its sigmoid.
    pub fn forward_logit(&mut self, crop: &Tensor<T>, mode: Mode) -> Result<T> {
        let (c, h, w) = crop.dims3()?;
        if c != 3 {
            return Err(Error::shape(format!("D_p expects 3-channel crops, got {c}")));
        }
        if h < self.config.min_crop || w < self.config.min_crop {
            return Err(Error::CropTooSmall {
                w,
                h,
                min: self.config.min_crop,
            });
        }
        let mut x = crop.clone().unsqueeze0();
        if let Some(resize) = &mut self.resize {
            x = resize.forward(&x)?;
        }
        for block in &mut self.body {
            x = block.conv.forward(&x)?;
            if let Some(norm) = &mut block.norm {
                x = norm.forward(&x, mode)?;
            }
            x = block.act.forward(&x);
        }
        self.feature_shape = x.shape().to_vec();
        let features = if self.config.spp_enabled {
            let (_, c, fh, fw) = x.dims4()?;
            self.pool.forward(&x.reshape(&[c, fh, fw])?)?
        } else {
            let len = x.len();
            x.reshape(&[len])?
        };
        let len = features.len();
        let logit = self.head.forward(&features.reshape(&[1, len])?)?;
        Ok(logit.data()[0])
    }

    /// Probability in `(0, 1)` that the crop is a real pedestrian.
    pub fn forward(&mut self, crop: &Tensor<T>, mode: Mode) -> Result<T> {
        self.forward_logit(crop, mode).map(sigmoid)
    }

    /// Gradient of the loss w.r.t. the crop, given `d loss / d logit`.
    pub fn backward(&mut self, d_logit: T, param_grads: bool) -> Result<Tensor<T>> {
        let g = Tensor::from_vec(&[1, 1], vec![d_logit])?;
        let features = self.head.backward(&g, param_grads)?;
        let mut g = if self.config.spp_enabled {
            let len = features.len();
            self.pool
                .backward(&features.reshape(&[len])?)?
                .reshape(&self.feature_shape)?
        } else {
            features.reshape(&self.feature_shape)?
        };
        for block in self.body.iter_mut().rev() {
            g = block.act.backward(&g)?;
            if let Some(norm) = &mut block.norm {
                g = norm.backward(&g, param_grads)?;
            }
            g = block.conv.backward(&g, param_grads)?;
        }
        if let Some(resize) = &self.resize {
            g = resize.backward(&g)?;
        }
        let (_, c, h, w) = g.dims4()?;
        g.reshape(&[c, h, w])
    }
}

impl<T: Scalar> Parameters<T> for PedestrianDiscriminator<T> {
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
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> DpConfig {
        DpConfig {
            layer_channels: vec![4, 8, 8, 8, 8],
            ..Default::default()
        }
    }

    #[test]
    fn default_pyramid_has_21_bins() {
        assert_eq!(SppLevels::default().total_bins(), 21);
    }

    #[test]
    fn constant_map_pools_to_constant_vector() {
        let t = Tensor::<f32>::full(&[2, 4, 4], 3.0);
        let v = spp_pool(&t, &SppLevels::default()).unwrap();
        assert_eq!(v.len(), 42);
        assert!(v.data().iter().all(|&x| x == 3.0));
    }

    #[test]
    fn ramp_pools_to_known_bins() {
        let t = Tensor::<f32>::from_vec(&[1, 4, 4], (1..=16).map(|v| v as f32).collect()).unwrap();
        let v = spp_pool(&t, &SppLevels::default()).unwrap();
        let mut expected = vec![16.0, 6.0, 8.0, 14.0, 16.0];
        expected.extend((1..=16).map(|v| v as f32));
        assert_eq!(v.data(), expected.as_slice());
    }

    #[test]
    fn single_pixel_fills_every_bin() {
        let t = Tensor::<f32>::full(&[1, 1, 1], -0.5);
        let v = spp_pool(&t, &SppLevels::default()).unwrap();
        assert_eq!(v.data(), &[-0.5; 21]);
    }

    #[test]
    fn variable_crops_share_the_feature_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DpConfig::scaled(4);
        assert_eq!(cfg.feature_len().unwrap(), 32 * 21);
        let mut d = PedestrianDiscriminator::<f32>::new(cfg, &mut rng).unwrap();
        for (h, w) in [(80, 30), (120, 48), (16, 16)] {
            let p = d.forward(&Tensor::full(&[3, h, w], 0.2), Mode::Train).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(matches!(
            d.forward(&Tensor::zeros(&[3, 15, 40]), Mode::Train),
            Err(Error::CropTooSmall { .. })
        ));
    }

    #[test]
    fn default_feature_is_512_times_21() {
        assert_eq!(DpConfig::default().feature_len().unwrap(), 512 * 21);
    }

    #[test]
    fn disabling_pyramid_resizes_to_fixed_input() {
        let cfg = DpConfig {
            spp_enabled: false,
            fixed_input: 32,
            ..tiny()
        };
        // 32 -> 16 -> 8 -> 4 -> 4 -> 4
        assert_eq!(cfg.feature_len().unwrap(), 8 * 16);
        let mut d = PedestrianDiscriminator::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let crop = Tensor::full(&[3, 40, 18], 0.1);
        d.forward(&crop, Mode::Train).unwrap();
        assert_eq!(d.backward(1.0, true).unwrap().shape(), &[3, 40, 18]);
    }

    proptest! {
        #[test]
        fn pooling_is_monotone_in_every_input(
            h in 1usize..7, w in 1usize..7,
            seed in any::<u64>(), bump in 0.0f32..2.0, pick in any::<prop::sample::Index>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base = Tensor::from_vec(&[2, h, w], data).unwrap();
            let mut raised = base.clone();
            let i = pick.index(raised.len());
            raised.data_mut()[i] += bump;
            let levels = SppLevels::default();
            let a = spp_pool(&base, &levels).unwrap();
            let b = spp_pool(&raised, &levels).unwrap();
            prop_assert_eq!(a.len(), 2 * 21);
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!(y >= x);
            }
        }
    }
}
