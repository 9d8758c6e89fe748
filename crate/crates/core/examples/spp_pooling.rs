//! Pyramid pooling turns feature maps of any size into a fixed 21-bin-per-channel vector.

use psgan::disc_pedestrian::{bin_range, spp_pool, DpConfig, PedestrianDiscriminator, SppLevels};
use psgan::nn::Mode;
use psgan::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let levels = SppLevels::default();
    println!("levels {:?} -> {} bins per channel", levels.0, levels.total_bins());

    let ramp = Tensor::from_vec(&[1, 4, 4], (1..=16).map(|v| v as f32).collect())?;
    println!("4x4 ramp pooled: {:?}", spp_pool(&ramp, &levels)?.data());

    // overlapping bins on inputs smaller than the grid
    for len in [1, 3, 5] {
        let bins: Vec<_> = (0..4).map(|i| bin_range(i, 4, len)).collect();
        println!("length {len}, 4 bins: {bins:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut dp = PedestrianDiscriminator::new(DpConfig::scaled(8), &mut rng)?;
    for (h, w) in [(16, 16), (48, 20), (90, 35)] {
        let crop = Tensor::full(&[3, h, w], 0.1f32);
        let p = dp.forward(&crop, Mode::Eval)?;
        println!("crop {h}x{w}: D_p probability {p:.4}");
    }
    Ok(())
}
