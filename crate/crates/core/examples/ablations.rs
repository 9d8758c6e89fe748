//! The ablation models differ only in configuration: same seed, same data, different traces.

use psgan::scene::assemble_dataset;
use psgan::toyscapes::{gen_toy_dataset, ToyConfig};
use psgan::trainer::{train, ModelConfig, TrainConfig, TrainOutputs, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scenes = gen_toy_dataset(&mut rng, &ToyConfig::default(), 8)?;
    let pairs = assemble_dataset(&scenes, 64, &mut rng);
    for variant in [Variant::Full, Variant::NoSpp, Variant::BothLeastSquares, Variant::BothLogLikelihood] {
        let mut config = TrainConfig {
            epochs: 2,
            seed: 5,
            model: ModelConfig::for_patch(64, 8)?,
            ..TrainConfig::default()
        };
        variant.apply(&mut config);
        let report = train(config, &pairs, &TrainOutputs::default())?;
        let last = report.epochs.last().expect("at least one epoch");
        println!(
            "{variant:?}: spp {} db {:?} dp {:?} -> db {:.4} dp {:.4} g_total {:.4}",
            report.state.config.model.dp.spp_enabled,
            report.state.config.losses.db_kind,
            report.state.config.losses.dp_kind,
            last.db_loss,
            last.dp_loss,
            last.g_total
        );
    }
    Ok(())
}
