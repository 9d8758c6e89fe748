//! Minimal CNN building blocks with hand-derived backward passes.

mod act;
mod adam;
mod conv;
mod linear;
mod norm;
mod param;
mod resize;

pub use act::{sigmoid, LeakyRelu, Tanh};
pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvGeometry, ConvTranspose2d, Padding};
pub use linear::Linear;
pub use norm::BatchNorm2d;
pub use param::{Mode, Param, Parameters};
pub use resize::Resize;

pub(crate) use param::join;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Scalar, Tensor};

/// Gaussian initialization, drawn in `f64` so both precisions see the same values.
pub(crate) fn init_normal<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    mean: f64,
    std: f64,
    rng: &mut R,
) -> Tensor<T> {
    let dist = Normal::new(mean, std).expect("valid normal");
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Receptive field of a stack of `(kernel, stride)` layers on its input.
pub fn receptive_field(layers: &[(usize, usize)]) -> usize {
    let mut field = 1;
    let mut jump = 1;
    for &(kernel, stride) in layers {
        field += (kernel - 1) * jump;
        jump *= stride;
    }
    field
}
