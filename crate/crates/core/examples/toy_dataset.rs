//! Renders toy street scenes, writes them as PNG + annotations and prepares patch pairs.
//!
//! `cargo run --release --example toy_dataset -- /tmp/toy`

use std::path::PathBuf;

use psgan::dataset::{load_pairs, load_scenes, prepare_pairs, save_pairs, save_scenes, PrepConfig, Split};
use psgan::toyscapes::{gen_toy_dataset, ToyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy_dataset".into()));
    let cfg = ToyConfig {
        n_peds: 2,
        ..ToyConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let scenes = gen_toy_dataset(&mut rng, &cfg, 16)?;
    let annotations = save_scenes(&scenes, &out.join("raw"))?;
    println!("wrote {} scenes to {}", scenes.len(), annotations.display());

    let prep = PrepConfig {
        min_h: 36,
        min_w: 16,
        patch: 64,
        seed: 7,
        ..PrepConfig::default()
    };
    let loaded = load_scenes(&annotations)?;
    let (train, test) = prepare_pairs(&loaded, &prep, &mut ChaCha8Rng::seed_from_u64(prep.seed));
    save_pairs(&out.join("data"), &prep, &train, &test)?;
    println!("{} train / {} test pairs", train.len(), test.len());
    let reloaded = load_pairs(&out.join("data"), Split::Train)?;
    println!("reload identical: {}", reloaded == train);
    Ok(())
}
