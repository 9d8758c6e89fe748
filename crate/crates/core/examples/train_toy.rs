//! Trains a small model on toy pairs in-process and evaluates it on held-out pairs.
//!
//! `cargo run --release --example train_toy -- [epochs]`

use psgan::scene::assemble_dataset;
use psgan::toyscapes::{eval_generator, gen_toy_dataset, ToyConfig};
use psgan::trainer::{train, ModelConfig, TrainConfig, TrainOutputs, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scenes = gen_toy_dataset(&mut rng, &ToyConfig::default(), 48)?;
    let mut pairs = assemble_dataset(&scenes, 64, &mut rng);
    let test = pairs.split_off(40);

    let config = TrainConfig {
        epochs,
        seed: 1,
        model: ModelConfig::for_patch(64, 8)?,
        ..TrainConfig::default()
    };
    let mut baseline: TrainState = TrainState::new(config.clone())?;
    let report = train(config, &pairs, &TrainOutputs::default())?;
    for (i, m) in report.epochs.iter().enumerate() {
        println!(
            "epoch {:>2}: db {:.3} dp {:.3} g_adv_db {:.3} g_adv_dp {:.3} g_l1 {:.4}",
            i + 1,
            m.db_loss,
            m.dp_loss,
            m.g_adv_db,
            m.g_adv_dp,
            m.g_l1
        );
    }
    let mut state = report.state;
    let trained = eval_generator(&mut state.generator, &test, &mut state.dp)?;
    let untrained = eval_generator(&mut baseline.generator, &test, &mut state.dp)?;
    println!("held-out: {trained:?}");
    println!("untrained inside_l1 {:.4}", untrained.inside_l1);
    Ok(())
}
