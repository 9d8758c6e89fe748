//! Command-line front end: `prep`, `train`, `synth`, `eval` and `toygen`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::dataset::{
    load_manifest, load_pairs, load_scenes, parse_include_list, prepare_pairs, read_mask, read_png,
    save_pairs, save_scenes, write_png, PrepConfig, Split, ANNOTATIONS_FILE,
};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::scene::{Scene, DEFAULT_MIN_HEIGHT, DEFAULT_MIN_WIDTH, DEFAULT_PATCH};
use crate::synthesis::{augment_scene, export_annotations, PasteMode, PlacementMask, SizeRange, SynthEntry, SynthManifest};
use crate::toyscapes::{eval_generator, gen_toy_dataset, EvalMetrics, ToyConfig};
use crate::trainer::{continue_training, ModelConfig, TrainConfig, TrainOutputs, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "psgan", about = "Pedestrian synthesis with a dual-discriminator GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter boxes, crop patches and write a train/test pair dataset.
    Prep(PrepArgs),
    /// Train G, D_b and D_p on a prepared dataset.
    Train(TrainArgs),
    /// Add generated pedestrians to scenes and export annotations.
    Synth(SynthArgs),
    /// Score a checkpoint on the held-out pairs.
    Eval(EvalArgs),
    /// Render a procedural toy dataset.
    Toygen(ToygenArgs),
}

#[derive(Debug, Args)]
struct PrepArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_HEIGHT)]
    min_h: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_WIDTH)]
    min_w: usize,
    #[arg(long, default_value_t = DEFAULT_PATCH)]
    patch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of scenes held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Keep only listed boxes: lines of `<image> <box index>`.
    #[arg(long)]
    include: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON training config; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_spp: bool,
    #[arg(long, value_parser = parse_kind)]
    db_loss: Option<LossKind>,
    #[arg(long, value_parser = parse_kind)]
    dp_loss: Option<LossKind>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Width multiplier for all three networks (64 gives the full-size models).
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Per-step metrics CSV; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Continue from a checkpoint up to its (or the overridden) epoch count.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory with `annotations.json`, or plain PNG backgrounds.
    #[arg(long)]
    scenes: PathBuf,
    /// Directory of placement masks mirroring the scene image paths.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n_per_scene: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_HEIGHT)]
    min_h: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_WIDTH)]
    min_w: usize,
    /// Tallest proposal; defaults to twice `--min-h`, capped by the patch size.
    #[arg(long)]
    h_max: Option<usize>,
    #[arg(long, default_value_t = 0.36)]
    aspect_min: f64,
    #[arg(long, default_value_t = 0.5)]
    aspect_max: f64,
    /// Paste the whole generated patch instead of the box interior.
    #[arg(long)]
    full_patch: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Evaluate on the training split instead of the held-out one.
    #[arg(long)]
    train_split: bool,
}

#[derive(Debug, Args)]
struct ToygenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    peds: usize,
    /// Additional pedestrian-free scenes written under `backgrounds/`.
    #[arg(long, default_value_t = 0)]
    blank: usize,
}

fn parse_kind(s: &str) -> std::result::Result<LossKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// `eval` output: metrics of the trained generator plus a fresh-initialization baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub metrics: EvalMetrics,
    pub untrained_inside_l1: f64,
    pub untrained_outside_l1: f64,
    pub epoch: usize,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NanDetected { .. } => EXIT_NUMERIC,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Prep(a) => prep(a),
        Command::Train(a) => train(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Toygen(a) => toygen(a),
    }
}

fn prep(a: PrepArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.test_fraction) {
        return Err(Error::config("--test-fraction must be in [0, 1)"));
    }
    let include = match &a.include {
        Some(p) => Some(parse_include_list(&fs::read_to_string(p)?)?),
        None => None,
    };
    let cfg = PrepConfig {
        min_h: a.min_h,
        min_w: a.min_w,
        patch: a.patch,
        seed: a.seed,
        test_fraction: a.test_fraction,
        include,
    };
    let scenes = load_scenes(&a.annotations)?;
    let (train, test) = prepare_pairs(&scenes, &cfg, &mut ChaCha8Rng::seed_from_u64(a.seed));
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    save_pairs(&a.out, &cfg, &train, &test)?;
    log::info!("{} train / {} test pairs from {} scenes", train.len(), test.len(), scenes.len());
    Ok(())
}

fn train_config(a: &TrainArgs, patch: usize) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_slice(&fs::read(p)?)?,
        None => TrainConfig::default(),
    };
    if a.base_channels.is_some() || cfg.model.generator.patch_size() != patch {
        let spp = cfg.model.dp.spp_enabled;
        cfg.model = ModelConfig::for_patch(patch, a.base_channels.unwrap_or(64))?;
        cfg.model.dp.spp_enabled = spp;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if a.no_spp {
        cfg.model.dp.spp_enabled = false;
    }
    if let Some(v) = a.db_loss {
        cfg.losses.db_kind = v;
    }
    if let Some(v) = a.dp_loss {
        cfg.losses.dp_kind = v;
    }
    if let Some(v) = a.lambda {
        cfg.losses.lambda_l1 = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.data)?;
    let pairs = load_pairs(&a.data, Split::Train)?;
    let state = match &a.resume {
        Some(path) => {
            let mut state = load_checkpoint(path)?;
            if let Some(e) = a.epochs {
                state.config.epochs = e;
            }
            state
        }
        None => TrainState::new(train_config(&a, manifest.patch_size)?)?,
    };
    if state.patch_size() != manifest.patch_size {
        return Err(Error::config(format!(
            "model expects {}px patches, data has {}px",
            state.patch_size(),
            manifest.patch_size
        )));
    }
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    let outputs = TrainOutputs {
        checkpoint: Some(a.out.clone()),
        metrics_csv: Some(a.metrics.clone().unwrap_or_else(|| a.out.with_extension("csv"))),
    };
    let report = continue_training(state, &pairs, &outputs)?;
    if let Some(last) = report.epochs.last() {
        log::info!("finished at step {}: g_l1 {:.4}", report.state.step, last.g_l1);
    }
    Ok(())
}

fn background_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let annotations = dir.join(ANNOTATIONS_FILE);
    if annotations.exists() {
        return load_scenes(&annotations);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    names.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    names.sort();
    names
        .iter()
        .map(|p| {
            let rel = p.file_name().expect("listed file").to_string_lossy().into_owned();
            Scene::new(read_png(p)?, Vec::new(), rel)
        })
        .collect()
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut state = load_checkpoint(&a.ckpt)?;
    let patch = state.patch_size();
    let size = SizeRange {
        h_min: a.min_h,
        h_max: a.h_max.unwrap_or((2 * a.min_h).min(patch)),
        aspect_min: a.aspect_min,
        aspect_max: a.aspect_max,
    };
    size.validate(a.min_h, a.min_w)?;
    if size.h_max > patch || (size.h_max as f64 * size.aspect_max).round() as usize > patch {
        return Err(Error::config(format!("--h-max/--aspect-max allow boxes larger than the {patch}px patch")));
    }
    let mode = if a.full_patch {
        PasteMode::FullPatch
    } else {
        PasteMode::BoxInterior
    };
    let scenes = background_scenes(&a.scenes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut augmented = Vec::with_capacity(scenes.len());
    let mut entries = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        let mask = match &a.mask {
            Some(dir) => {
                let (allowed, w, h) = read_mask(&dir.join(&scene.source_id))?;
                Some(PlacementMask::new(w, h, allowed)?)
            }
            None => None,
        };
        let (out, placed) =
            augment_scene(&mut state.generator, scene, mask.as_ref(), a.n_per_scene, &size, mode, &mut rng)?;
        write_png(&a.out.join(&out.source_id), &out.image)?;
        entries.push(SynthEntry {
            source: scene.source_id.clone(),
            image: out.source_id.clone(),
            synthetic: placed,
        });
        augmented.push(out);
    }
    export_annotations(&augmented, &a.out.join(ANNOTATIONS_FILE))?;
    let manifest = SynthManifest {
        seed: a.seed,
        size,
        paste: mode,
        scenes: entries,
    };
    fs::write(a.out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    let total: usize = manifest.scenes.iter().map(|e| e.synthetic.len()).sum();
    log::info!("placed {total} synthetic pedestrians in {} scenes", scenes.len());
    Ok(())
}

/// Scores a checkpoint on the pairs of `split` in a prepared dataset.
pub fn evaluate(ckpt: &Path, data: &Path, split: Split) -> Result<EvalReport> {
    let mut state = load_checkpoint(ckpt)?;
    let pairs = load_pairs(data, split)?;
    let metrics = eval_generator(&mut state.generator, &pairs, &mut state.dp)?;
    let mut fresh: TrainState = TrainState::new(state.config.clone())?;
    let baseline = eval_generator(&mut fresh.generator, &pairs, &mut state.dp)?;
    Ok(EvalReport {
        metrics,
        untrained_inside_l1: baseline.inside_l1,
        untrained_outside_l1: baseline.outside_l1,
        epoch: state.epoch,
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    let split = if a.train_split { Split::Train } else { Split::Test };
    let report = evaluate(&a.ckpt, &a.data, split)?;
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, serde_json::to_vec_pretty(&report)?)?;
    log::info!(
        "outside_l1 {:.4} inside_l1 {:.4} (untrained {:.4}) dp_fool_rate {:.3}",
        report.metrics.outside_l1,
        report.metrics.inside_l1,
        report.untrained_inside_l1,
        report.metrics.dp_fool_rate
    );
    Ok(())
}

fn toygen(a: ToygenArgs) -> Result<()> {
    let cfg = ToyConfig {
        width: a.width,
        height: a.height,
        n_peds: a.peds,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let scenes = gen_toy_dataset(&mut rng, &cfg, a.scenes)?;
    save_scenes(&scenes, &a.out)?;
    if a.blank > 0 {
        let blank_cfg = ToyConfig { n_peds: 0, ..cfg };
        let blanks = gen_toy_dataset(&mut rng, &blank_cfg, a.blank)?;
        save_scenes(&blanks, &a.out.join("backgrounds"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(dispatch(["psgan", "train", "--bogus"]), EXIT_USAGE);
        assert_eq!(dispatch(["psgan", "frobnicate"]), EXIT_USAGE);
        assert_eq!(dispatch(["psgan", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_data_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        let code = dispatch([
            "psgan".as_ref(),
            "eval".as_ref(),
            "--ckpt".as_ref(),
            missing.as_os_str(),
            "--data".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            dir.path().join("m.json").as_os_str(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&Error::nan("generator")), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::EmptyDataset), EXIT_DATA);
        assert_eq!(exit_code(&Error::config("x")), EXIT_USAGE);
    }

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["psgan", "train", "--data", "d", "--out", "o"];
        argv.extend(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn train_defaults_match_reference_settings() {
        let cfg = train_config(&train_args(&["--epochs", "200", "--lambda", "100"]), 256).unwrap();
        assert_eq!(cfg.epochs, 200);
        assert_eq!(cfg.losses.lambda_l1, 100.0);
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn ablation_flags_reach_the_config() {
        let a = train_config(&train_args(&["--no-spp"]), 256).unwrap();
        assert!(!a.model.dp.spp_enabled);
        let b = train_config(&train_args(&["--db-loss", "ls", "--dp-loss", "ls"]), 256).unwrap();
        assert_eq!((b.losses.db_kind, b.losses.dp_kind), (LossKind::LeastSquares, LossKind::LeastSquares));
        let c = train_config(&train_args(&["--db-loss", "nll", "--dp-loss", "nll"]), 256).unwrap();
        assert_eq!((c.losses.db_kind, c.losses.dp_kind), (LossKind::LogLikelihood, LossKind::LogLikelihood));
        assert!(Cli::try_parse_from(["psgan", "train", "--data", "d", "--out", "o", "--db-loss", "mse"]).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"epochs": 7, "seed": 3, "losses": {"lambda_l1": 10.0, "db_kind": "least_squares", "dp_kind": "log_likelihood"}}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = train_config(&train_args(&["--config", p, "--seed", "9", "--base-channels", "8"]), 64).unwrap();
        assert_eq!((cfg.epochs, cfg.seed, cfg.losses.lambda_l1), (7, 9, 10.0));
        assert_eq!(cfg.model.generator.patch_size(), 64);
        assert_eq!(cfg.model.generator.base_channels, 8);
    }
}
