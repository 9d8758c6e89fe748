//! Saves mid-run, reloads, and finishes: the resumed run matches an uninterrupted one bit for bit.

use psgan::checkpoint::{decode_checkpoint, encode_checkpoint};
use psgan::scene::assemble_dataset;
use psgan::toyscapes::{gen_toy_dataset, ToyConfig};
use psgan::trainer::{continue_training, train, ModelConfig, TrainConfig, TrainOutputs, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scenes = gen_toy_dataset(&mut rng, &ToyConfig::default(), 6)?;
    let pairs = assemble_dataset(&scenes, 64, &mut rng);
    let config = TrainConfig {
        epochs: 4,
        seed: 2,
        model: ModelConfig::for_patch(64, 4)?,
        ..TrainConfig::default()
    };
    let none = TrainOutputs::default();

    let straight = train(config.clone(), &pairs, &none)?;

    let half = TrainConfig { epochs: 2, ..config };
    let first = train(half, &pairs, &none)?;
    let bytes = encode_checkpoint(&first.state)?;
    println!("checkpoint after 2 epochs: {} bytes", bytes.len());
    let mut restored: TrainState = decode_checkpoint(&bytes)?;
    restored.config.epochs = 4;
    let resumed = continue_training(restored, &pairs, &none)?;

    let a = encode_checkpoint(&straight.state)?;
    let b = encode_checkpoint(&resumed.state)?;
    println!("uninterrupted and resumed runs identical: {}", a == b);
    Ok(())
}
