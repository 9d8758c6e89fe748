//! Central finite differences against backpropagation for D_p in double precision.

use psgan::disc_pedestrian::{DpConfig, PedestrianDiscriminator};
use psgan::losses::{discriminator_loss_with_grad, LossKind};
use psgan::nn::{Mode, Parameters};
use psgan::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(dp: &mut PedestrianDiscriminator<f64>, real: &Tensor<f64>, fake: &Tensor<f64>, backward: bool) -> f64 {
    let r = dp.forward_logit(real, Mode::Train).unwrap();
    let (lr, gr, _) = discriminator_loss_with_grad(LossKind::LogLikelihood, &[r], &[]);
    if backward {
        dp.backward(gr[0], true).unwrap();
    }
    let f = dp.forward_logit(fake, Mode::Train).unwrap();
    let (lf, _, gf) = discriminator_loss_with_grad(LossKind::LogLikelihood, &[], &[f]);
    if backward {
        dp.backward(gf[0], true).unwrap();
    }
    lr + lf
}

fn shift(dp: &mut PedestrianDiscriminator<f64>, name: &str, d: f64) {
    dp.visit_params_mut("", &mut |n, p| {
        if n == name {
            p.value.data_mut()[0] += d;
        }
    });
}

fn main() -> psgan::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = DpConfig {
        layer_channels: vec![4, 8, 8, 8, 8],
        ..DpConfig::default()
    };
    let mut dp = PedestrianDiscriminator::<f64>::new(cfg, &mut rng)?;
    let mut sample = |h, w| {
        Tensor::from_vec(&[3, h, w], (0..3 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let (real, fake) = (sample(16, 16), sample(24, 18));
    loss(&mut dp, &real, &fake, true);

    let mut names = Vec::new();
    dp.visit_params("", &mut |name, p| names.push((name.to_string(), p.value.len(), p.grad.data()[0])));
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for (name, _, analytic) in &names {
        shift(&mut dp, name, eps);
        let up = loss(&mut dp, &real, &fake, false);
        shift(&mut dp, name, -2.0 * eps);
        let down = loss(&mut dp, &real, &fake, false);
        shift(&mut dp, name, eps);
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
        println!("{name:<24} analytic {analytic:>13.6e} numeric {numeric:>13.6e} rel {rel:.1e}");
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
