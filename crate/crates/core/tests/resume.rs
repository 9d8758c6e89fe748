use psgan::checkpoint::{encode_checkpoint, load_checkpoint, save_checkpoint};
use psgan::scene::assemble_dataset;
use psgan::toyscapes::{gen_toy_dataset, ToyConfig};
use psgan::trainer::{continue_training, train, ModelConfig, TrainConfig, TrainOutputs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scenes = gen_toy_dataset(&mut rng, &ToyConfig::default(), 3).unwrap();
    let pairs = assemble_dataset(&scenes, 64, &mut rng);
    let config = TrainConfig {
        epochs: 3,
        seed: 9,
        model: ModelConfig::for_patch(64, 4).unwrap(),
        ..TrainConfig::default()
    };
    let none = TrainOutputs::default();
    let straight = train(config.clone(), &pairs, &none).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.psgn");
    let first = train(TrainConfig { epochs: 1, ..config }, &pairs, &none).unwrap();
    save_checkpoint(&first.state, &path).unwrap();
    let mut restored = load_checkpoint(&path).unwrap();
    restored.config.epochs = 3;
    let resumed = continue_training(restored, &pairs, &none).unwrap();

    assert_eq!(resumed.state.step, straight.state.step);
    let tail: Vec<_> = straight.steps[first.steps.len()..].iter().map(|r| r.metrics).collect();
    assert_eq!(tail, resumed.steps.iter().map(|r| r.metrics).collect::<Vec<_>>());
    assert_eq!(encode_checkpoint(&resumed.state).unwrap(), encode_checkpoint(&straight.state).unwrap());
}
