use std::fs;
use std::path::Path;

use psgan::checkpoint::load_checkpoint;
use psgan::cli::{dispatch, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use psgan::dataset::{load_annotations, load_scenes, read_png, ANNOTATIONS_FILE};
use psgan::scene::BoxLabel;

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("psgan").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn toygen_prep_train_synth_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (raw, data, ckpt, synth) = (
        dir.path().join("raw"),
        dir.path().join("data"),
        dir.path().join("model.psgn"),
        dir.path().join("synth"),
    );
    assert_eq!(run(&["toygen", "--out", s(&raw), "--scenes", "6", "--blank", "2", "--seed", "4"]), EXIT_OK);
    assert_eq!(load_scenes(&raw.join(ANNOTATIONS_FILE)).unwrap().len(), 6);

    let annotations = raw.join(ANNOTATIONS_FILE);
    let prep = ["prep", "--annotations", s(&annotations), "--out", s(&data)];
    assert_eq!(run(&[&prep[..], &["--min-h", "36", "--min-w", "16", "--patch", "64"]].concat()), EXIT_OK);

    let train = ["train", "--data", s(&data), "--out", s(&ckpt), "--epochs", "1", "--base-channels", "4"];
    assert_eq!(run(&train), EXIT_OK);
    let state = load_checkpoint(&ckpt).unwrap();
    assert_eq!(state.epoch, 1);
    assert!(ckpt.with_extension("csv").exists());

    let backgrounds = raw.join("backgrounds");
    let synth_args = ["synth", "--ckpt", s(&ckpt), "--scenes", s(&backgrounds), "--out", s(&synth)];
    assert_eq!(run(&[&synth_args[..], &["--n-per-scene", "2", "--min-h", "36", "--min-w", "16", "--aspect-min", "0.45", "--aspect-max", "0.6"]].concat()), EXIT_OK);
    let doc = load_annotations(&synth.join(ANNOTATIONS_FILE)).unwrap();
    assert_eq!(doc.scenes.len(), 2);
    assert_eq!(doc.box_count(), doc.count_label(BoxLabel::Synthetic));
    assert!(doc.count_label(BoxLabel::Synthetic) >= 1);
    for scene in &doc.scenes {
        let image = read_png(&synth.join(&scene.image)).unwrap();
        assert_eq!(image.shape(), &[3, 96, 128]);
    }
    assert!(synth.join("manifest.json").exists());

    let metrics = dir.path().join("metrics.json");
    assert_eq!(run(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--out", s(&metrics)]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    for key in ["outside_l1", "inside_l1", "dp_fool_rate", "untrained_inside_l1"] {
        assert!(report[key].is_number(), "{key} missing from {report}");
    }
}

#[test]
fn bad_invocations_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["train", "--data", s(&dir.path().join("absent")), "--out", "x.psgn"]), EXIT_DATA);
    assert_eq!(run(&["toygen", "--out", s(dir.path()), "--scenes", "1", "--height", "20"]), EXIT_USAGE);
}
