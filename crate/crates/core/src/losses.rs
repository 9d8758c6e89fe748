//! Adversarial, reconstruction and combined objectives.
//!
//! The scalar functions mirror the objectives directly; the `*_with_grad`
//! forms operate on raw discriminator scores and also return the gradient
//! the trainer backpropagates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::tensor::{Scalar, Tensor};

/// Probabilities are kept this far from 0 and 1 before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared distance of raw scores to 1 (real) / 0 (fake).
    LeastSquares,
    /// Negative log likelihood of sigmoid probabilities.
    LogLikelihood,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" | "least_squares" => Ok(LossKind::LeastSquares),
            "nll" | "log_likelihood" => Ok(LossKind::LogLikelihood),
            other => Err(Error::config(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_l1: f64,
    pub db_kind: LossKind,
    pub dp_kind: LossKind,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_l1: 100.0,
            db_kind: LossKind::LeastSquares,
            dp_kind: LossKind::LogLikelihood,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return Err(Error::config(format!("lambda_l1 = {} must be >= 0", self.lambda_l1)));
        }
        Ok(())
    }
}

fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n.max(1)).unwrap()
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = T::lit(PROB_CLAMP);
    p.max(eps).min(T::one() - eps)
}

fn check_prob<T: Scalar>(p: T) -> Result<T> {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return Err(Error::Domain(format!("{p:?} is not a probability")));
    }
    Ok(clamp_prob(p))
}

/// `mean((real - 1)^2) + mean(fake^2)`.
pub fn lsgan_d_loss<T: Scalar>(real_map: &Tensor<T>, fake_map: &Tensor<T>) -> Result<T> {
    real_map.ensure_same_shape(fake_map)?;
    let real = real_map.data().iter().map(|&r| (r - T::one()).powi(2)).sum::<T>();
    let fake = fake_map.data().iter().map(|&f| f * f).sum::<T>();
    Ok(real / count(real_map.len()) + fake / count(fake_map.len()))
}

/// `mean((fake - 1)^2)`.
pub fn lsgan_g_loss<T: Scalar>(fake_map: &Tensor<T>) -> T {
    fake_map.data().iter().map(|&f| (f - T::one()).powi(2)).sum::<T>() / count(fake_map.len())
}

/// `-ln(real_p) - ln(1 - fake_p)` with clamped probabilities.
pub fn nll_dp_loss<T: Scalar>(real_p: T, fake_p: T) -> Result<T> {
    let r = check_prob(real_p)?;
    let f = check_prob(fake_p)?;
    Ok(-r.ln() - (T::one() - f).ln())
}

/// Non-saturating generator term `-ln(fake_p)`.
pub fn nll_g_dp_loss<T: Scalar>(fake_p: T) -> Result<T> {
    Ok(-check_prob(fake_p)?.ln())
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(generated: &Tensor<T>, truth: &Tensor<T>) -> Result<T> {
    generated.ensure_same_shape(truth)?;
    let total: T = generated
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&a, &b)| (a - b).abs())
        .sum();
    Ok(total / count(generated.len()))
}

/// `ls_g + nll_g + lambda * l1`.
pub fn total_g_loss<T: Scalar>(ls_g: T, nll_g: T, l1: T, weights: &LossWeights) -> T {
    ls_g + nll_g + T::lit(weights.lambda_l1) * l1
}

/// `(-ln p, d/ds)` for the probability `p = sigmoid(s)` of a "real" target.
fn neg_log_sigmoid<T: Scalar>(score: T) -> (T, T) {
    let p = sigmoid(score);
    let c = clamp_prob(p);
    let grad = if c == p { p - T::one() } else { T::zero() };
    (-c.ln(), grad)
}

/// `(-ln(1 - p), d/ds)` for a "fake" target.
fn neg_log_one_minus_sigmoid<T: Scalar>(score: T) -> (T, T) {
    let p = sigmoid(score);
    let c = clamp_prob(p);
    let grad = if c == p { p } else { T::zero() };
    (-(T::one() - c).ln(), grad)
}

/// Per-score loss and gradient toward a real (1) or fake (0) target.
fn score_term<T: Scalar>(kind: LossKind, score: T, real: bool) -> (T, T) {
    match (kind, real) {
        (LossKind::LeastSquares, true) => {
            let d = score - T::one();
            (d * d, d + d)
        }
        (LossKind::LeastSquares, false) => (score * score, score + score),
        (LossKind::LogLikelihood, true) => neg_log_sigmoid(score),
        (LossKind::LogLikelihood, false) => neg_log_one_minus_sigmoid(score),
    }
}

fn mean_term<T: Scalar>(kind: LossKind, scores: &[T], real: bool) -> (T, Vec<T>) {
    let n = count::<T>(scores.len());
    let mut total = T::zero();
    let grads = scores
        .iter()
        .map(|&s| {
            let (v, g) = score_term(kind, s, real);
            total = total + v;
            g / n
        })
        .collect();
    (total / n, grads)
}

/// Discriminator objective on raw scores: real scores pushed to 1, fake to 0.
/// Returns the loss and the gradients w.r.t. both score sets.
pub fn discriminator_loss_with_grad<T: Scalar>(
    kind: LossKind,
    real_scores: &[T],
    fake_scores: &[T],
) -> (T, Vec<T>, Vec<T>) {
    let (lr, gr) = mean_term(kind, real_scores, true);
    let (lf, gf) = mean_term(kind, fake_scores, false);
    (lr + lf, gr, gf)
}

/// Non-saturating generator objective on raw scores of generated samples.
pub fn generator_adv_loss_with_grad<T: Scalar>(kind: LossKind, fake_scores: &[T]) -> (T, Vec<T>) {
    mean_term(kind, fake_scores, true)
}

/// L1 loss with its (sub)gradient w.r.t. `generated` (sign, 0 at ties).
pub fn l1_loss_with_grad<T: Scalar>(
    generated: &Tensor<T>,
    truth: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    let value = l1_loss(generated, truth)?;
    let n = count::<T>(generated.len());
    let mut grad = generated.clone();
    for (g, &t) in grad.data_mut().iter_mut().zip(truth.data()) {
        let d = *g - t;
        *g = if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        };
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn scalar_kind_losses_agree_with_probability_forms() {
        for s in [-3.0f64, -0.2, 0.0, 0.7, 4.0] {
            let p = sigmoid(s);
            let (v, _) = score_term(LossKind::LogLikelihood, s, true);
            assert!((v - nll_g_dp_loss(p).unwrap()).abs() < 1e-12);
            let (r, _, _) = discriminator_loss_with_grad(LossKind::LogLikelihood, &[s], &[s]);
            assert!((r - nll_dp_loss(p, p).unwrap()).abs() < 1e-12);
            let (ls, _, _) = discriminator_loss_with_grad(LossKind::LeastSquares, &[s], &[s]);
            assert!((ls - lsgan_d_loss(&map(&[s]), &map(&[s])).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn score_gradients_match_central_differences() {
        let h = 1e-6;
        for kind in [LossKind::LeastSquares, LossKind::LogLikelihood] {
            for real in [true, false] {
                for s in [-2.5f64, -0.1, 0.4, 3.0] {
                    let (_, g) = score_term(kind, s, real);
                    let fd = (score_term(kind, s + h, real).0 - score_term(kind, s - h, real).0)
                        / (2.0 * h);
                    assert!((g - fd).abs() < 1e-6, "{kind:?} {real} {s}: {g} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn l1_gradient_is_scaled_sign() {
        let a = map(&[1.0, -1.0, 0.0, 0.5]);
        let b = map(&[0.0, 0.0, 0.0, 1.0]);
        let (v, g) = l1_loss_with_grad(&a, &b).unwrap();
        assert!((v - 0.625).abs() < 1e-12);
        assert_eq!(g.data(), &[0.25, -0.25, 0.0, -0.25]);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let w = LossWeights {
            lambda_l1: -1.0,
            ..Default::default()
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn loss_kind_parses_cli_spellings() {
        assert_eq!("ls".parse::<LossKind>().unwrap(), LossKind::LeastSquares);
        assert_eq!("nll".parse::<LossKind>().unwrap(), LossKind::LogLikelihood);
        assert!("wgan".parse::<LossKind>().is_err());
    }
}
