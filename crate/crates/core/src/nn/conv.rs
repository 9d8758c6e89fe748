//! 2-D convolution and transposed convolution over `N x C x H x W` batches,
//! lowered to GEMM through im2col.

use rand::Rng;

use super::param::{join, Param, Parameters};
use super::init_normal;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Symmetric zero padding on every border.
    Fixed(usize),
    /// Output size `ceil(in / stride)`; any surplus padding goes after.
    Same,
}

/// Placement of a kernel window grid over one input plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub kernel: usize,
    pub stride: usize,
}

fn axis(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Fixed(p) => {
            let span = input + 2 * p;
            (span >= kernel).then(|| ((span - kernel) / stride + 1, p))
        }
        Padding::Same if input == 0 => None,
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

impl ConvGeometry {
    pub fn new(
        in_h: usize,
        in_w: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let h = axis(in_h, kernel, stride, padding);
        let w = axis(in_w, kernel, stride, padding);
        match (h, w) {
            (Some((out_h, pad_top)), Some((out_w, pad_left))) if out_h > 0 && out_w > 0 => {
                Ok(ConvGeometry {
                    in_h,
                    in_w,
                    out_h,
                    out_w,
                    pad_top,
                    pad_left,
                    kernel,
                    stride,
                })
            }
            _ => Err(Error::shape(format!(
                "{in_h}x{in_w} input too small for a {kernel}x{kernel} kernel with stride {stride}"
            ))),
        }
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source coordinate for kernel tap `t` at output position `o`,
    /// `None` when it falls into padding.
    #[inline]
    fn src(o: usize, t: usize, stride: usize, pad: usize, limit: usize) -> Option<usize> {
        (o * stride + t).checked_sub(pad).filter(|&v| v < limit)
    }
}

/// Unfolds one `C x H x W` plane stack into a `(C*k*k) x (out_h*out_w)` matrix.
pub(crate) fn im2col<T: Scalar>(input: &[T], channels: usize, g: &ConvGeometry, cols: &mut [T]) {
    let k = g.kernel;
    let plane = g.out_plane();
    debug_assert_eq!(cols.len(), channels * k * k * plane);
    for c in 0..channels {
        let src_plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let out_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match ConvGeometry::src(oy, ki, g.stride, g.pad_top, g.in_h) {
                        None => out_row.fill(T::zero()),
                        Some(iy) => {
                            let src_row = &src_plane[iy * g.in_w..(iy + 1) * g.in_w];
                            for (ox, v) in out_row.iter_mut().enumerate() {
                                *v = match ConvGeometry::src(ox, kj, g.stride, g.pad_left, g.in_w)
                                {
                                    Some(ix) => src_row[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `out`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], channels: usize, g: &ConvGeometry, out: &mut [T]) {
    let k = g.kernel;
    let plane = g.out_plane();
    for c in 0..channels {
        let dst_plane = &mut out[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let Some(iy) = ConvGeometry::src(oy, ki, g.stride, g.pad_top, g.in_h) else {
                        continue;
                    };
                    let dst_row = &mut dst_plane[iy * g.in_w..(iy + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        if let Some(ix) = ConvGeometry::src(ox, kj, g.stride, g.pad_left, g.in_w) {
                            dst_row[ix] = dst_row[ix] + src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    geometry: ConvGeometry,
    batch: usize,
    cols: Vec<T>,
}

/// Square-kernel convolution, weight layout `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T = f32> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = init_normal(&[out_channels, in_channels, kernel, kernel], 0.0, 0.02, rng);
        Conv2d {
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(Tensor::zeros(&[out_channels]))),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn geometry(&self, in_h: usize, in_w: usize) -> Result<ConvGeometry> {
        ConvGeometry::new(in_h, in_w, self.kernel, self.stride, self.padding)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let g = self.geometry(h, w)?;
        let rows = c * self.kernel * self.kernel;
        let plane = g.out_plane();
        let mut cols = vec![T::zero(); n * rows * plane];
        let mut out = Tensor::zeros(&[n, self.out_channels, g.out_h, g.out_w]);
        let in_stride = c * h * w;
        let out_stride = self.out_channels * plane;
        for s in 0..n {
            let sample_cols = &mut cols[s * rows * plane..(s + 1) * rows * plane];
            im2col(&x.data()[s * in_stride..(s + 1) * in_stride], c, &g, sample_cols);
            let dst = &mut out.data_mut()[s * out_stride..(s + 1) * out_stride];
            T::gemm(
                self.out_channels,
                rows,
                plane,
                T::one(),
                self.weight.value.data(),
                false,
                sample_cols,
                false,
                T::zero(),
                dst,
            );
            if let Some(bias) = &self.bias {
                for (oc, chunk) in dst.chunks_mut(plane).enumerate() {
                    let b = bias.value.data()[oc];
                    chunk.iter_mut().for_each(|v| *v = *v + b);
                }
            }
        }
        self.cache = Some(ConvCache {
            geometry: g,
            batch: n,
            cols,
        });
        Ok(out)
    }

    /// Returns the input gradient; parameter gradients accumulate when `param_grads`.
    pub fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::shape("conv backward before forward"))?;
        let g = cache.geometry;
        let n = cache.batch;
        let plane = g.out_plane();
        if grad_out.shape() != [n, self.out_channels, g.out_h, g.out_w] {
            return Err(Error::shape(format!(
                "conv backward got gradient {:?}",
                grad_out.shape()
            )));
        }
        let c = self.in_channels;
        let rows = c * self.kernel * self.kernel;
        let mut grad_in = Tensor::zeros(&[n, c, g.in_h, g.in_w]);
        let mut dcols = vec![T::zero(); rows * plane];
        let out_stride = self.out_channels * plane;
        let in_stride = c * g.in_h * g.in_w;
        for s in 0..n {
            let dy = &grad_out.data()[s * out_stride..(s + 1) * out_stride];
            if param_grads {
                let cols = &cache.cols[s * rows * plane..(s + 1) * rows * plane];
                T::gemm(
                    self.out_channels,
                    plane,
                    rows,
                    T::one(),
                    dy,
                    false,
                    cols,
                    true,
                    T::one(),
                    self.weight.grad.data_mut(),
                );
                if let Some(bias) = &mut self.bias {
                    for (oc, chunk) in dy.chunks(plane).enumerate() {
                        let gb = &mut bias.grad.data_mut()[oc];
                        *gb = *gb + chunk.iter().copied().sum::<T>();
                    }
                }
            }
            T::gemm(
                rows,
                self.out_channels,
                plane,
                T::one(),
                self.weight.value.data(),
                true,
                dy,
                false,
                T::zero(),
                &mut dcols,
            );
            col2im(
                &dcols,
                c,
                &g,
                &mut grad_in.data_mut()[s * in_stride..(s + 1) * in_stride],
            );
        }
        Ok(grad_in)
    }
}

#[derive(Debug, Clone)]
struct TransposeCache<T> {
    input: Tensor<T>,
    geometry: ConvGeometry,
}

/// Transposed convolution (the adjoint of [`Conv2d`]), weight layout `[in, out, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T = f32> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    cache: Option<TransposeCache<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = init_normal(&[in_channels, out_channels, kernel, kernel], 0.0, 0.02, rng);
        ConvTranspose2d {
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(Tensor::zeros(&[out_channels]))),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    /// Geometry of the equivalent forward convolution (output plane = our input).
    fn geometry(&self, in_h: usize, in_w: usize) -> Result<ConvGeometry> {
        let grow = |v: usize| {
            ((v - 1) * self.stride + self.kernel)
                .checked_sub(2 * self.padding)
                .filter(|&o| o > 0)
        };
        let (Some(out_h), Some(out_w)) = (grow(in_h.max(1)), grow(in_w.max(1))) else {
            return Err(Error::shape("transposed conv output would be empty"));
        };
        let g = ConvGeometry::new(
            out_h,
            out_w,
            self.kernel,
            self.stride,
            Padding::Fixed(self.padding),
        )?;
        debug_assert_eq!((g.out_h, g.out_w), (in_h, in_w));
        Ok(g)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "transposed conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let g = self.geometry(h, w)?;
        let rows = self.out_channels * self.kernel * self.kernel;
        let plane = h * w;
        let mut cols = vec![T::zero(); rows * plane];
        let out_plane = g.in_h * g.in_w;
        let mut out = Tensor::zeros(&[n, self.out_channels, g.in_h, g.in_w]);
        for s in 0..n {
            let xs = &x.data()[s * c * plane..(s + 1) * c * plane];
            T::gemm(
                rows,
                c,
                plane,
                T::one(),
                self.weight.value.data(),
                true,
                xs,
                false,
                T::zero(),
                &mut cols,
            );
            let dst = &mut out.data_mut()
                [s * self.out_channels * out_plane..(s + 1) * self.out_channels * out_plane];
            col2im(&cols, self.out_channels, &g, dst);
            if let Some(bias) = &self.bias {
                for (oc, chunk) in dst.chunks_mut(out_plane).enumerate() {
                    let b = bias.value.data()[oc];
                    chunk.iter_mut().for_each(|v| *v = *v + b);
                }
            }
        }
        self.cache = Some(TransposeCache {
            input: x.clone(),
            geometry: g,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::shape("transposed conv backward before forward"))?;
        let g = cache.geometry;
        let (n, c, h, w) = cache.input.dims4()?;
        if grad_out.shape() != [n, self.out_channels, g.in_h, g.in_w] {
            return Err(Error::shape(format!(
                "transposed conv backward got gradient {:?}",
                grad_out.shape()
            )));
        }
        let rows = self.out_channels * self.kernel * self.kernel;
        let plane = h * w;
        let out_plane = g.in_h * g.in_w;
        let mut dcols = vec![T::zero(); rows * plane];
        let mut grad_in = Tensor::zeros(&[n, c, h, w]);
        for s in 0..n {
            let dy = &grad_out.data()
                [s * self.out_channels * out_plane..(s + 1) * self.out_channels * out_plane];
            im2col(dy, self.out_channels, &g, &mut dcols);
            T::gemm(
                c,
                rows,
                plane,
                T::one(),
                self.weight.value.data(),
                false,
                &dcols,
                false,
                T::zero(),
                &mut grad_in.data_mut()[s * c * plane..(s + 1) * c * plane],
            );
            if param_grads {
                let xs = &cache.input.data()[s * c * plane..(s + 1) * c * plane];
                T::gemm(
                    c,
                    plane,
                    rows,
                    T::one(),
                    xs,
                    false,
                    &dcols,
                    true,
                    T::one(),
                    self.weight.grad.data_mut(),
                );
                if let Some(bias) = &mut self.bias {
                    for (oc, chunk) in dy.chunks(out_plane).enumerate() {
                        let gb = &mut bias.grad.data_mut()[oc];
                        *gb = *gb + chunk.iter().copied().sum::<T>();
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

macro_rules! conv_parameters {
    ($ty:ident) => {
        impl<T: Scalar> Parameters<T> for $ty<T> {
            fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
                f(&join(prefix, "weight"), &self.weight);
                if let Some(b) = &self.bias {
                    f(&join(prefix, "bias"), b);
                }
            }

            fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
                f(&join(prefix, "weight"), &mut self.weight);
                if let Some(b) = &mut self.bias {
                    f(&join(prefix, "bias"), b);
                }
            }
        }
    };
}

conv_parameters!(Conv2d);
conv_parameters!(ConvTranspose2d);
