use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Leaky rectifier; slope 0 gives a plain ReLU.
#[derive(Debug, Clone)]
pub struct LeakyRelu<T = f32> {
    slope: T,
    positive: Vec<bool>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope: T::lit(slope),
            positive: Vec::new(),
        }
    }

    pub fn relu() -> Self {
        Self::new(0.0)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.positive = x.data().iter().map(|&v| v > T::zero()).collect();
        let slope = self.slope;
        x.map(|v| if v > T::zero() { v } else { v * slope })
    }

    pub fn backward(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.len() != self.positive.len() {
            return Err(Error::shape("activation gradient length mismatch"));
        }
        let mut g = grad_out.clone();
        for (v, &pos) in g.data_mut().iter_mut().zip(&self.positive) {
            if !pos {
                *v = *v * self.slope;
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh<T = f32> {
    output: Vec<T>,
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Tanh { output: Vec::new() }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = x.map(|v| v.tanh());
        self.output = y.data().to_vec();
        y
    }

    pub fn backward(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.len() != self.output.len() {
            return Err(Error::shape("tanh gradient length mismatch"));
        }
        let mut g = grad_out.clone();
        for (v, &y) in g.data_mut().iter_mut().zip(&self.output) {
            *v = *v * (T::one() - y * y);
        }
        Ok(g)
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
