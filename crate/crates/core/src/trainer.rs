//! Alternating optimization of the two discriminators and the generator.
//!
//! Each step runs, in order: a D_b update on stacked real/fake pairs, a D_p
//! update on real/fake crops at the noise box, and a G update on the full
//! objective with scores recomputed by the freshly updated discriminators.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::disc_background::{BackgroundDiscriminator, DbConfig, PAIR_CHANNELS};
use crate::disc_pedestrian::{DpConfig, PedestrianDiscriminator};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::losses::{
    discriminator_loss_with_grad, generator_adv_loss_with_grad, l1_loss_with_grad, total_g_loss,
    LossKind, LossWeights,
};
use crate::nn::{Adam, AdamConfig, Mode, Parameters};
use crate::scene::{crop_region, BBox, PatchPair};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub db: DbConfig,
    pub dp: DpConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            generator: GeneratorConfig::default(),
            db: DbConfig::default(),
            dp: DpConfig::default(),
        }
    }
}

impl ModelConfig {
    /// All three networks sized for `patch`, widths scaled from `base` channels.
    pub fn for_patch(patch: usize, base: usize) -> Result<Self> {
        Ok(ModelConfig {
            generator: GeneratorConfig::for_patch(patch, base)?,
            db: DbConfig::scaled(base),
            dp: DpConfig::scaled(base),
        })
    }
}

/// Named configurations for the ablation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Pyramid pooling on, least squares for D_b, log likelihood for D_p.
    Full,
    /// Pyramid pooling removed from D_p.
    NoSpp,
    /// Least squares for both discriminators.
    BothLeastSquares,
    /// Log likelihood for both discriminators.
    BothLogLikelihood,
}

impl Variant {
    pub fn apply(self, config: &mut TrainConfig) {
        let (spp, db, dp) = match self {
            Variant::Full => (true, LossKind::LeastSquares, LossKind::LogLikelihood),
            Variant::NoSpp => (false, LossKind::LeastSquares, LossKind::LogLikelihood),
            Variant::BothLeastSquares => (true, LossKind::LeastSquares, LossKind::LeastSquares),
            Variant::BothLogLikelihood => (true, LossKind::LogLikelihood, LossKind::LogLikelihood),
        };
        config.model.dp.spp_enabled = spp;
        config.losses.db_kind = db;
        config.losses.dp_kind = dp;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub losses: LossWeights,
    pub model: ModelConfig,
    /// Write an intermediate checkpoint every this many epochs (0 = final only).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 1,
            optimizer: AdamConfig::default(),
            seed: 0,
            losses: LossWeights::default(),
            model: ModelConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        self.losses.validate()?;
        let g = &self.model.generator;
        g.validate(g.patch_size())?;
        self.model.db.validate()?;
        self.model.dp.validate()
    }
}

/// The six loss components recorded for every step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub db_loss: f64,
    pub dp_loss: f64,
    pub g_adv_db: f64,
    pub g_adv_dp: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

impl StepMetrics {
    pub const FIELDS: [&'static str; 6] =
        ["db_loss", "dp_loss", "g_adv_db", "g_adv_dp", "g_l1", "g_total"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.db_loss,
            self.dp_loss,
            self.g_adv_db,
            self.g_adv_dp,
            self.g_l1,
            self.g_total,
        ]
    }

    pub fn mean<'a>(items: impl IntoIterator<Item = &'a StepMetrics>) -> StepMetrics {
        let mut n = 0usize;
        let mut acc = [0.0; 6];
        for m in items {
            n += 1;
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        let [db_loss, dp_loss, g_adv_db, g_adv_dp, g_l1, g_total] = acc.map(|v| v / n.max(1) as f64);
        StepMetrics {
            db_loss,
            dp_loss,
            g_adv_db,
            g_adv_dp,
            g_l1,
            g_total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub metrics: StepMetrics,
}

/// Networks, optimizer moments, counters and the shuffling generator.
#[derive(Debug, Clone)]
pub struct TrainState<T = f32> {
    pub config: TrainConfig,
    pub generator: Generator<T>,
    pub db: BackgroundDiscriminator<T>,
    pub dp: PedestrianDiscriminator<T>,
    pub opt_generator: Adam<T>,
    pub opt_db: Adam<T>,
    pub opt_dp: Adam<T>,
    pub epoch: usize,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

fn finite<T: Scalar>(value: T, component: &str) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::nan(component))
    }
}

fn f64_of<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Adds a `3 x h x w` crop gradient into sample `s` of an `N x 3 x P x P` gradient.
fn scatter_region<T: Scalar>(
    grad: &mut Tensor<T>,
    sample: usize,
    bbox: &BBox,
    region: &Tensor<T>,
) -> Result<()> {
    let (_, c, h, w) = grad.dims4()?;
    if region.shape() != [c, bbox.h, bbox.w] {
        return Err(Error::shape("crop gradient does not match its box"));
    }
    let data = grad.data_mut();
    for ch in 0..c {
        for row in 0..bbox.h {
            let dst = ((sample * c + ch) * h + bbox.y + row) * w + bbox.x;
            let src = (ch * bbox.h + row) * bbox.w;
            for (d, &g) in data[dst..dst + bbox.w]
                .iter_mut()
                .zip(&region.data()[src..src + bbox.w])
            {
                *d = *d + g;
            }
        }
    }
    Ok(())
}

/// One batch lifted into the training precision.
struct Batch<'a, T> {
    x: Tensor<T>,
    y: Tensor<T>,
    boxes: Vec<&'a BBox>,
}

impl<'a, T: Scalar> Batch<'a, T> {
    fn new(pairs: &[&'a PatchPair], patch: usize) -> Result<Self> {
        for p in pairs {
            if p.x_noisy.shape() != [3, patch, patch] || p.y_truth.shape() != [3, patch, patch] {
                return Err(Error::shape(format!(
                    "pair from {} is not 3 x {patch} x {patch}",
                    p.source_id
                )));
            }
            p.z_box.ensure_inside(patch, patch)?;
        }
        let xs: Vec<_> = pairs.iter().map(|p| p.x_noisy.cast::<T>()).collect();
        let ys: Vec<_> = pairs.iter().map(|p| p.y_truth.cast::<T>()).collect();
        Ok(Batch {
            x: Tensor::stack(&xs.iter().collect::<Vec<_>>())?,
            y: Tensor::stack(&ys.iter().collect::<Vec<_>>())?,
            boxes: pairs.iter().map(|p| &p.z_box).collect(),
        })
    }

    fn len(&self) -> usize {
        self.boxes.len()
    }
}

impl<T: Scalar> TrainState<T> {
    /// Initializes all networks from `config.seed`; the same stream then drives shuffling.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = Generator::new(config.model.generator, &mut rng)?;
        let db = BackgroundDiscriminator::new(config.model.db.clone(), &mut rng)?;
        let dp = PedestrianDiscriminator::new(config.model.dp.clone(), &mut rng)?;
        Ok(TrainState {
            opt_generator: Adam::new(config.optimizer, &generator),
            opt_db: Adam::new(config.optimizer, &db),
            opt_dp: Adam::new(config.optimizer, &dp),
            config,
            generator,
            db,
            dp,
            epoch: 0,
            step: 0,
            rng,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.config.model.generator.patch_size()
    }

    fn stacked(x: &Tensor<T>, candidate: &Tensor<T>) -> Result<Tensor<T>> {
        let stack = Tensor::cat_channels(x, candidate)?;
        debug_assert_eq!(stack.shape()[1], PAIR_CHANNELS);
        Ok(stack)
    }

    /// D_b step on `x||y` (real) against `x||G(x)` (fake).
    fn update_db(&mut self, batch: &Batch<'_, T>, fake: &Tensor<T>) -> Result<T> {
        let kind = self.config.losses.db_kind;
        self.db.zero_grad();
        let real_scores = self.db.forward(&Self::stacked(&batch.x, &batch.y)?, Mode::Train)?;
        let (real_loss, real_grad, _) = discriminator_loss_with_grad(kind, real_scores.data(), &[]);
        self.db
            .backward(&Tensor::from_vec(real_scores.shape(), real_grad)?, true)?;
        let fake_scores = self.db.forward(&Self::stacked(&batch.x, fake)?, Mode::Train)?;
        let (fake_loss, _, fake_grad) = discriminator_loss_with_grad(kind, &[], fake_scores.data());
        self.db
            .backward(&Tensor::from_vec(fake_scores.shape(), fake_grad)?, true)?;
        let loss = finite(real_loss + fake_loss, "db_loss")?;
        self.opt_db.update(&mut self.db)?;
        if !self.db.params_finite() {
            return Err(Error::nan("D_b parameters"));
        }
        Ok(loss)
    }

    /// D_p step on real crops `y[z]` against generated crops `G(x)[z]`.
    fn update_dp(&mut self, batch: &Batch<'_, T>, fake: &Tensor<T>) -> Result<T> {
        let kind = self.config.losses.dp_kind;
        let scale = T::one() / T::from_usize(batch.len()).unwrap();
        self.dp.zero_grad();
        let mut total = T::zero();
        for (s, bbox) in batch.boxes.iter().enumerate() {
            let real_crop = crop_region(&batch.y.sample(s)?, bbox)?;
            let real = self.dp.forward_logit(&real_crop, Mode::Train)?;
            let (lr, gr, _) = discriminator_loss_with_grad(kind, &[real], &[]);
            self.dp.backward(gr[0] * scale, true)?;
            let fake_crop = crop_region(&fake.sample(s)?, bbox)?;
            let fake_logit = self.dp.forward_logit(&fake_crop, Mode::Train)?;
            let (lf, _, gf) = discriminator_loss_with_grad(kind, &[], &[fake_logit]);
            self.dp.backward(gf[0] * scale, true)?;
            total = total + (lr + lf) * scale;
        }
        let loss = finite(total, "dp_loss")?;
        self.opt_dp.update(&mut self.dp)?;
        if !self.dp.params_finite() {
            return Err(Error::nan("D_p parameters"));
        }
        Ok(loss)
    }

    /// Full generator objective given the cached forward pass that produced `fake`.
    /// Returns `(adv_db, adv_dp, l1, total)` and `d total / d fake`.
    pub(crate) fn generator_objective(
        &mut self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        boxes: &[&BBox],
        fake: &Tensor<T>,
    ) -> Result<([T; 4], Tensor<T>)> {
        let weights = self.config.losses;
        let scores = self.db.forward(&Self::stacked(x, fake)?, Mode::Train)?;
        let (adv_db, score_grad) = generator_adv_loss_with_grad(weights.db_kind, scores.data());
        let stack_grad = self
            .db
            .backward(&Tensor::from_vec(scores.shape(), score_grad)?, false)?;
        let (_, mut grad) = stack_grad.split_channels(3)?;

        let scale = T::one() / T::from_usize(boxes.len()).unwrap();
        let mut adv_dp = T::zero();
        for (s, bbox) in boxes.iter().enumerate() {
            let crop = crop_region(&fake.sample(s)?, bbox)?;
            let logit = self.dp.forward_logit(&crop, Mode::Train)?;
            let (v, g) = generator_adv_loss_with_grad(weights.dp_kind, &[logit]);
            adv_dp = adv_dp + v * scale;
            let crop_grad = self.dp.backward(g[0] * scale, false)?;
            scatter_region(&mut grad, s, bbox, &crop_grad)?;
        }

        let (l1, l1_grad) = l1_loss_with_grad(fake, y)?;
        let lambda = T::lit(weights.lambda_l1);
        for (g, &d) in grad.data_mut().iter_mut().zip(l1_grad.data()) {
            *g = *g + lambda * d;
        }
        let total = total_g_loss(adv_db, adv_dp, l1, &weights);
        Ok(([adv_db, adv_dp, l1, total], grad))
    }

    fn update_generator(&mut self, batch: &Batch<'_, T>, fake: &Tensor<T>) -> Result<[T; 4]> {
        self.generator.zero_grad();
        let (values, grad) = self.generator_objective(&batch.x, &batch.y, &batch.boxes, fake)?;
        for (v, name) in values.iter().zip(["g_adv_db", "g_adv_dp", "g_l1", "g_total"]) {
            finite(*v, name)?;
        }
        self.generator.backward(&grad)?;
        self.opt_generator.update(&mut self.generator)?;
        if !self.generator.params_finite() {
            return Err(Error::nan("generator parameters"));
        }
        Ok(values)
    }

    /// One optimization step over a mini-batch of pairs.
    pub fn train_batch(&mut self, pairs: &[&PatchPair]) -> Result<StepMetrics> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let batch = Batch::new(pairs, self.patch_size())?;
        let fake = self.generator.forward(&batch.x, Mode::Train)?;
        if !fake.all_finite() {
            return Err(Error::nan("generator output"));
        }
        let db_loss = self.update_db(&batch, &fake)?;
        let dp_loss = self.update_dp(&batch, &fake)?;
        let [g_adv_db, g_adv_dp, g_l1, g_total] = self.update_generator(&batch, &fake)?;
        self.step += 1;
        Ok(StepMetrics {
            db_loss: f64_of(db_loss),
            dp_loss: f64_of(dp_loss),
            g_adv_db: f64_of(g_adv_db),
            g_adv_dp: f64_of(g_adv_dp),
            g_l1: f64_of(g_l1),
            g_total: f64_of(g_total),
        })
    }

    pub fn train_step(&mut self, pair: &PatchPair) -> Result<StepMetrics> {
        self.train_batch(&[pair])
    }
}

/// Where a training run writes its artifacts; all optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub checkpoint: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub state: TrainState,
    pub steps: Vec<StepRecord>,
    /// Mean metrics per epoch.
    pub epochs: Vec<StepMetrics>,
}

/// Checkpoint path for an intermediate epoch: `model.psgn` -> `model.epoch0005.psgn`.
pub fn epoch_checkpoint_path(final_path: &Path, epoch: usize) -> PathBuf {
    let stem = final_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let ext = final_path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    final_path.with_file_name(format!("{stem}.epoch{epoch:04}{ext}"))
}

pub fn write_metrics_csv(path: &Path, steps: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch", "step"];
    header.extend(StepMetrics::FIELDS);
    w.write_record(&header)?;
    for r in steps {
        let mut row = vec![r.epoch.to_string(), r.step.to_string()];
        row.extend(r.metrics.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains a fresh model for `config.epochs` over `pairs`.
pub fn train(config: TrainConfig, pairs: &[PatchPair], outputs: &TrainOutputs) -> Result<TrainReport> {
    let state = TrainState::new(config)?;
    continue_training(state, pairs, outputs)
}

/// Runs the remaining epochs of `state` (from `state.epoch` to `config.epochs`).
pub fn continue_training(
    mut state: TrainState,
    pairs: &[PatchPair],
    outputs: &TrainOutputs,
) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let epochs = state.config.epochs;
    let batch_size = state.config.batch_size;
    let mut steps = Vec::new();
    let mut summaries = Vec::new();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    while state.epoch < epochs {
        let epoch = state.epoch + 1;
        order.sort_unstable();
        order.shuffle(&mut state.rng);
        let first = steps.len();
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&PatchPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            let metrics = state.train_batch(&batch)?;
            steps.push(StepRecord {
                epoch,
                step: state.step,
                metrics,
            });
        }
        state.epoch = epoch;
        let summary = StepMetrics::mean(steps[first..].iter().map(|r| &r.metrics));
        log::info!(
            "epoch {epoch}/{epochs}: db {:.4} dp {:.4} g {:.4} (l1 {:.4})",
            summary.db_loss,
            summary.dp_loss,
            summary.g_total,
            summary.g_l1
        );
        summaries.push(summary);
        let every = state.config.checkpoint_every;
        if let Some(path) = &outputs.checkpoint {
            if every > 0 && epoch % every == 0 && epoch < epochs {
                save_checkpoint(&state, &epoch_checkpoint_path(path, epoch))?;
            }
        }
    }
    if let Some(path) = &outputs.checkpoint {
        save_checkpoint(&state, path)?;
    }
    if let Some(path) = &outputs.metrics_csv {
        write_metrics_csv(path, &steps)?;
    }
    Ok(TrainReport {
        state,
        steps,
        epochs: summaries,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scene::PatchOffset;

    pub(crate) fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            model: ModelConfig {
                generator: GeneratorConfig {
                    levels: 5,
                    base_channels: 4,
                },
                db: DbConfig::scaled(4),
                dp: DpConfig::scaled(2),
            },
            seed: 11,
            ..Default::default()
        }
    }

    pub(crate) fn tiny_pair(seed: u64) -> PatchPair {
        let p = 32;
        let data = (0..3 * p * p)
            .map(|i| {
                let (c, r, col) = (i / (p * p), (i / p) % p, i % p);
                ((c as f32) * 0.3 + (r as f32) / p as f32 - (col as f32) / (2 * p) as f32) - 0.4
            })
            .collect();
        let y = Tensor::from_vec(&[3, p, p], data).unwrap();
        let z = BBox::real(8, 4, 16, 24).unwrap();
        PatchPair::from_truth(y, z, seed, PatchOffset::default(), "tiny").unwrap()
    }

    fn snapshot<M: Parameters<f32>>(m: &M) -> Vec<Vec<f32>> {
        let mut out = Vec::new();
        m.visit_params("", &mut |_, p| out.push(p.value.data().to_vec()));
        out
    }

    #[test]
    fn metrics_carry_all_six_components() {
        let mut state = TrainState::<f32>::new(tiny_config()).unwrap();
        let m = state.train_step(&tiny_pair(0)).unwrap();
        assert!(m.values().iter().all(|v| v.is_finite()));
        assert_eq!(
            StepMetrics::FIELDS,
            ["db_loss", "dp_loss", "g_adv_db", "g_adv_dp", "g_l1", "g_total"]
        );
        let expected_total = m.g_adv_db + m.g_adv_dp + 100.0 * m.g_l1;
        assert!((m.g_total - expected_total).abs() < 1e-4 * expected_total.abs().max(1.0));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let mut cfg = tiny_config();
        cfg.optimizer.lr = 0.0;
        let mut state = TrainState::<f32>::new(cfg).unwrap();
        let before = (
            snapshot(&state.generator),
            snapshot(&state.db),
            snapshot(&state.dp),
        );
        for s in 0..3 {
            state.train_step(&tiny_pair(s)).unwrap();
        }
        assert_eq!(before.0, snapshot(&state.generator));
        assert_eq!(before.1, snapshot(&state.db));
        assert_eq!(before.2, snapshot(&state.dp));
    }

    #[test]
    fn each_phase_only_touches_its_own_network() {
        let mut state = TrainState::<f32>::new(tiny_config()).unwrap();
        let pair = tiny_pair(1);
        let batch = Batch::<f32>::new(&[&pair], 32).unwrap();
        let fake = state.generator.forward(&batch.x, Mode::Train).unwrap();

        let (g0, dp0) = (snapshot(&state.generator), snapshot(&state.dp));
        let db0 = snapshot(&state.db);
        state.update_db(&batch, &fake).unwrap();
        assert_eq!(g0, snapshot(&state.generator));
        assert_eq!(dp0, snapshot(&state.dp));
        assert_ne!(db0, snapshot(&state.db));

        let db1 = snapshot(&state.db);
        state.update_dp(&batch, &fake).unwrap();
        assert_eq!(g0, snapshot(&state.generator));
        assert_eq!(db1, snapshot(&state.db));
        assert_ne!(dp0, snapshot(&state.dp));

        let dp1 = snapshot(&state.dp);
        state.update_generator(&batch, &fake).unwrap();
        assert_eq!(db1, snapshot(&state.db));
        assert_eq!(dp1, snapshot(&state.dp));
        assert_ne!(g0, snapshot(&state.generator));
    }

    #[test]
    fn train_logs_epochs_times_pairs_steps() {
        let mut cfg = tiny_config();
        cfg.epochs = 2;
        let pairs: Vec<_> = (0..3).map(tiny_pair).collect();
        let report = train(cfg, &pairs, &TrainOutputs::default()).unwrap();
        assert_eq!(report.steps.len(), 6);
        assert_eq!(report.epochs.len(), 2);
        assert_eq!(report.state.step, 6);
        assert_eq!(report.steps.last().unwrap().epoch, 2);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(
            train(tiny_config(), &[], &TrainOutputs::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn wrong_patch_size_is_a_shape_error() {
        let mut state = TrainState::<f32>::new(tiny_config()).unwrap();
        let mut pair = tiny_pair(0);
        pair.x_noisy = Tensor::zeros(&[3, 16, 16]);
        assert!(matches!(state.train_step(&pair), Err(Error::Shape(_))));
    }

    #[test]
    fn epoch_checkpoint_names() {
        let p = epoch_checkpoint_path(Path::new("/tmp/run/model.psgn"), 5);
        assert_eq!(p, Path::new("/tmp/run/model.epoch0005.psgn"));
    }

    #[test]
    fn variants_only_flip_switches() {
        let mut cfg = TrainConfig::default();
        Variant::NoSpp.apply(&mut cfg);
        assert!(!cfg.model.dp.spp_enabled);
        Variant::BothLogLikelihood.apply(&mut cfg);
        assert!(cfg.model.dp.spp_enabled);
        assert_eq!(cfg.losses.db_kind, LossKind::LogLikelihood);
        assert_eq!(cfg.losses.dp_kind, LossKind::LogLikelihood);
        Variant::BothLeastSquares.apply(&mut cfg);
        assert_eq!(cfg.losses.db_kind, LossKind::LeastSquares);
        assert_eq!(cfg.losses.dp_kind, LossKind::LeastSquares);
    }
}
