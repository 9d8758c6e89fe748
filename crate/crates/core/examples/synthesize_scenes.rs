//! Fills blank backgrounds with generated pedestrians and exports mixed real/synthetic labels.
//!
//! Uses a checkpoint when given (`-- model.psgn`), otherwise a briefly trained toy model.

use std::path::Path;

use psgan::checkpoint::load_checkpoint;
use psgan::dataset::{annotations_for, write_png};
use psgan::scene::{assemble_dataset, BoxLabel};
use psgan::synthesis::{augment_scene, export_annotations, PasteMode, SizeRange};
use psgan::toyscapes::{gen_toy_dataset, ToyConfig};
use psgan::trainer::{train, ModelConfig, TrainConfig, TrainOutputs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = match std::env::args().nth(1) {
        Some(path) => load_checkpoint(Path::new(&path))?,
        None => {
            let scenes = gen_toy_dataset(&mut rng, &ToyConfig::default(), 24)?;
            let pairs = assemble_dataset(&scenes, 64, &mut rng);
            let config = TrainConfig {
                epochs: 2,
                model: ModelConfig::for_patch(64, 8)?,
                ..TrainConfig::default()
            };
            train(config, &pairs, &TrainOutputs::default())?.state
        }
    };

    let blank = ToyConfig {
        n_peds: 0,
        ..ToyConfig::default()
    };
    let backgrounds = gen_toy_dataset(&mut rng, &blank, 4)?;
    let size = SizeRange {
        h_min: 40,
        h_max: 60,
        aspect_min: 0.4,
        aspect_max: 0.6,
    };
    size.validate(36, 16)?;
    let out = Path::new("synth_out");
    let mut augmented = Vec::new();
    for scene in &backgrounds {
        let (scene, placed) = augment_scene(&mut state.generator, scene, None, 2, &size, PasteMode::BoxInterior, &mut rng)?;
        println!("{}: placed {:?}", scene.source_id, placed.iter().map(|b| (b.x, b.y, b.w, b.h)).collect::<Vec<_>>());
        write_png(&out.join(&scene.source_id), &scene.image)?;
        augmented.push(scene);
    }
    export_annotations(&augmented, &out.join("annotations.json"))?;
    let doc = annotations_for(&augmented);
    println!(
        "{} boxes exported ({} synthetic) to {}",
        doc.box_count(),
        doc.count_label(BoxLabel::Synthetic),
        out.display()
    );
    Ok(())
}
