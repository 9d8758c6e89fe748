use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Interpolation taps along one axis: `(low, high, weight_of_high)`.
fn taps<T: Scalar>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, T::lit(src - lo as f64))
        })
        .collect()
}

/// Bilinear resampling to a fixed spatial size (half-pixel centers).
#[derive(Debug, Clone)]
pub struct Resize {
    out_h: usize,
    out_w: usize,
    input_shape: Option<[usize; 4]>,
}

impl Resize {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        Resize {
            out_h,
            out_w,
            input_shape: None,
        }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if h == 0 || w == 0 {
            return Err(Error::shape("cannot resize an empty plane"));
        }
        let rows = taps::<T>(h, self.out_h);
        let cols = taps::<T>(w, self.out_w);
        let mut out = Tensor::zeros(&[n, c, self.out_h, self.out_w]);
        let src = x.data();
        for p in 0..n * c {
            let plane = &src[p * h * w..(p + 1) * h * w];
            let dst = &mut out.data_mut()[p * self.out_h * self.out_w..(p + 1) * self.out_h * self.out_w];
            for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                    let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
                    let bottom = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
                    dst[oy * self.out_w + ox] = top * (T::one() - fy) + bottom * fy;
                }
            }
        }
        self.input_shape = Some([n, c, h, w]);
        Ok(out)
    }

    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = self
            .input_shape
            .ok_or_else(|| Error::shape("resize backward before forward"))?;
        if grad_out.shape() != [n, c, self.out_h, self.out_w] {
            return Err(Error::shape("resize gradient shape mismatch"));
        }
        let rows = taps::<T>(h, self.out_h);
        let cols = taps::<T>(w, self.out_w);
        let mut grad_in = Tensor::zeros(&[n, c, h, w]);
        for p in 0..n * c {
            let dy = &grad_out.data()[p * self.out_h * self.out_w..(p + 1) * self.out_h * self.out_w];
            let dst = &mut grad_in.data_mut()[p * h * w..(p + 1) * h * w];
            for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                    let g = dy[oy * self.out_w + ox];
                    let gt = g * (T::one() - fy);
                    let gb = g * fy;
                    dst[y0 * w + x0] = dst[y0 * w + x0] + gt * (T::one() - fx);
                    dst[y0 * w + x1] = dst[y0 * w + x1] + gt * fx;
                    dst[y1 * w + x0] = dst[y1 * w + x0] + gb * (T::one() - fx);
                    dst[y1 * w + x1] = dst[y1 * w + x1] + gb * fx;
                }
            }
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_resize_is_identity() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut r = Resize::new(2, 3);
        assert_eq!(r.forward(&x).unwrap(), x);
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 5], (0..15).map(|v| (v as f64).sin()).collect())
            .unwrap();
        let y = Tensor::<f64>::from_vec(&[1, 1, 4, 4], (0..16).map(|v| (v as f64).cos()).collect())
            .unwrap();
        let mut r = Resize::new(4, 4);
        let rx = r.forward(&x).unwrap();
        let ry = r.backward(&y).unwrap();
        let lhs: f64 = rx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ry.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
