//! Procedural street scenes with stick-figure pedestrians, and generator metrics.
//!
//! Colour contract: every background pixel keeps all channels within
//! `[-BACKGROUND_LIMIT, BACKGROUND_LIMIT]`, while every figure pixel has at least
//! one channel with magnitude `>= FIGURE_MIN`. Figures never overlap and keep a
//! gap of `FIGURE_GAP` pixels, so each box can be recovered from the pixels alone.
//! Pixel values sit on the 8-bit grid, so scenes round-trip through PNG exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{from_unit, to_unit};
use crate::disc_pedestrian::PedestrianDiscriminator;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::Mode;
use crate::scene::{crop_region, BBox, PatchPair, Scene};
use crate::tensor::Tensor;

pub const BACKGROUND_LIMIT: f32 = 0.5;
pub const FIGURE_MIN: f32 = 0.7;
pub const FIGURE_GAP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub width: usize,
    pub height: usize,
    pub n_peds: usize,
    /// Inclusive figure height range in pixels.
    pub ped_h_range: (usize, usize),
    /// Figures narrower than this are re-posed.
    pub min_width: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            width: 128,
            height: 96,
            n_peds: 1,
            ped_h_range: (40, 60),
            min_width: 16,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ped_h_range;
        if lo < 12 || lo > hi {
            return Err(Error::config(format!("pedestrian height range {lo}..={hi} is invalid (min 12)")));
        }
        if hi + 1 > self.height {
            return Err(Error::config(format!(
                "pedestrians up to {hi}px do not fit a {}px tall scene",
                self.height
            )));
        }
        if self.min_width > lo || self.min_width + 2 * FIGURE_GAP > self.width {
            return Err(Error::config(format!(
                "minimum width {} is impossible for {lo}px figures in a {}px wide scene",
                self.min_width, self.width
            )));
        }
        Ok(())
    }
}

type Rgb = [f32; 3];

struct Canvas {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn set(&mut self, row: usize, col: usize, c: Rgb) {
        let plane = self.w * self.h;
        for (ch, v) in c.iter().enumerate() {
            self.data[ch * plane + row * self.w + col] = *v;
        }
    }
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, c: Rgb, amount: f32) -> Rgb {
    c.map(|v| (v + rng.random_range(-amount..=amount)).clamp(-BACKGROUND_LIMIT, BACKGROUND_LIMIT))
}

fn background<R: Rng + ?Sized>(rng: &mut R, w: usize, h: usize) -> (Canvas, usize) {
    let mut canvas = Canvas {
        w,
        h,
        data: vec![0.0; 3 * w * h],
    };
    let horizon = rng.random_range(h * 3 / 10..=h / 2);
    let sky: Rgb = [rng.random_range(-0.3..0.0), rng.random_range(0.0..0.2), rng.random_range(0.25..0.4)];
    let road: Rgb = [rng.random_range(-0.2..0.0); 3];
    for row in 0..h {
        for col in 0..w {
            let c = if row < horizon {
                let fade = row as f32 / horizon as f32 * 0.1;
                jitter(rng, sky.map(|v| v + fade), 0.03)
            } else {
                let lane = (row - horizon) % 12 < 2 && (col / 10) % 2 == 0 && row > (h + horizon) / 2;
                let base = if lane { [0.35; 3] } else { road };
                jitter(rng, base, 0.05)
            };
            canvas.set(row, col, c);
        }
    }
    for _ in 0..rng.random_range(0..=2usize) {
        let pw = rng.random_range(2..=3usize);
        let x = rng.random_range(0..w - pw);
        let top = rng.random_range(0..horizon.max(1));
        let bottom = rng.random_range(horizon..h);
        let c: Rgb = [-0.45, -0.4, -0.35];
        for row in top..=bottom {
            for col in x..x + pw {
                canvas.set(row, col, jitter(rng, c, 0.03));
            }
        }
    }
    (canvas, horizon)
}

/// Skin, shirt and trousers tones; each keeps one channel at magnitude >= 0.8.
const BASE_COLOURS: [Rgb; 3] = [[0.9, 0.45, 0.1], [0.85, -0.3, -0.4], [-0.85, -0.85, -0.8]];

fn figure_colour<R: Rng + ?Sized>(rng: &mut R, part: usize) -> Rgb {
    BASE_COLOURS[part].map(|v| (v + rng.random_range(-0.1..=0.1)).clamp(-1.0, 1.0))
}

/// A posed stick figure rasterized into a local `h x w` grid of colour indices.
struct Figure {
    w: usize,
    h: usize,
    /// 0 = empty, 1 = head, 2 = shirt, 3 = trousers.
    cells: Vec<u8>,
}

fn dist_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn pose_figure<R: Rng + ?Sized>(rng: &mut R, h: usize) -> Figure {
    let hf = h as f32;
    let torso_w = hf / 6.0;
    let leg_w = hf / 10.0;
    let arm_w = (hf / 14.0).max(1.6);
    let head_r = hf / 9.0;
    let leg_len = hf * 0.45;
    let arm_len = hf * 0.33;
    let leg_a = rng.random_range(0.2f32..0.4);
    let leg_b = rng.random_range(0.2f32..0.4);
    let arm_a = rng.random_range(0.35f32..0.8);
    let arm_b = rng.random_range(0.35f32..0.8);
    let reach = (arm_len * arm_a.sin().max(arm_b.sin())).max(leg_len * leg_a.sin().max(leg_b.sin()));
    let w = (2.0 * (reach + leg_w + 1.0)).ceil() as usize + 1;
    let cx = w as f32 / 2.0;
    let head_c = (cx, head_r + 0.5);
    let neck = (cx, 2.0 * head_r + torso_w / 2.0);
    let hip = (cx, hf - leg_len * leg_a.cos().max(leg_b.cos()) - leg_w / 2.0 - 0.5);
    let shoulder = (cx, neck.1 + hf * 0.04);
    let limbs = [
        (hip, (cx - leg_len * leg_a.sin(), hip.1 + leg_len * leg_a.cos()), leg_w, 3u8),
        (hip, (cx + leg_len * leg_b.sin(), hip.1 + leg_len * leg_b.cos()), leg_w, 3),
        (neck, hip, torso_w, 2),
        (shoulder, (cx - arm_len * arm_a.sin(), shoulder.1 + arm_len * arm_a.cos()), arm_w, 2),
        (shoulder, (cx + arm_len * arm_b.sin(), shoulder.1 + arm_len * arm_b.cos()), arm_w, 2),
    ];
    let mut cells = vec![0u8; w * h];
    for row in 0..h {
        for col in 0..w {
            let p = (col as f32 + 0.5, row as f32 + 0.5);
            let mut cell = 0;
            for &(a, b, thick, tag) in &limbs {
                if dist_to_segment(p, a, b) <= thick / 2.0 {
                    cell = tag;
                }
            }
            let (hx, hy) = (p.0 - head_c.0, p.1 - head_c.1);
            if (hx * hx + hy * hy).sqrt() <= head_r {
                cell = 1;
            }
            cells[row * w + col] = cell;
        }
    }
    Figure { w, h, cells }
}

impl Figure {
    /// Tight extent of drawn cells as `(col0, row0, col1, row1)` inclusive.
    fn extent(&self) -> Option<(usize, usize, usize, usize)> {
        let mut ext: Option<(usize, usize, usize, usize)> = None;
        for row in 0..self.h {
            for col in 0..self.w {
                if self.cells[row * self.w + col] != 0 {
                    ext = Some(match ext {
                        None => (col, row, col, row),
                        Some((c0, r0, c1, r1)) => (c0.min(col), r0.min(row), c1.max(col), r1.max(row)),
                    });
                }
            }
        }
        ext
    }
}

fn separated(a: &BBox, b: &BBox) -> bool {
    a.right() + FIGURE_GAP <= b.x
        || b.right() + FIGURE_GAP <= a.x
        || a.bottom() + FIGURE_GAP <= b.y
        || b.bottom() + FIGURE_GAP <= a.y
}

/// Renders one toy scene with `cfg.n_peds` figures and their tight boxes.
pub fn gen_toy_scene<R: Rng + ?Sized>(rng: &mut R, cfg: &ToyConfig, source_id: impl Into<String>) -> Result<Scene> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let (mut canvas, horizon) = background(rng, w, h);
    let mut boxes: Vec<BBox> = Vec::with_capacity(cfg.n_peds);
    let mut attempts = 0;
    while boxes.len() < cfg.n_peds {
        attempts += 1;
        if attempts > 200 * cfg.n_peds.max(1) {
            return Err(Error::config(format!(
                "could not place {} separated figures in a {w}x{h} scene",
                cfg.n_peds
            )));
        }
        let fh = rng.random_range(cfg.ped_h_range.0..=cfg.ped_h_range.1);
        let fig = pose_figure(rng, fh);
        let Some((c0, r0, c1, r1)) = fig.extent() else { continue };
        let (bw, bh) = (c1 - c0 + 1, r1 - r0 + 1);
        if bw < cfg.min_width || bw + 2 * FIGURE_GAP > w {
            continue;
        }
        let lowest_foot = (horizon + bh / 3).max(bh).min(h);
        let foot = rng.random_range(lowest_foot - 1..h);
        let top = foot + 1 - bh;
        let left = rng.random_range(0..=w - bw);
        let bbox = BBox::real(left, top, bw, bh)?;
        if !boxes.iter().all(|b| separated(b, &bbox)) {
            continue;
        }
        let colours = [figure_colour(rng, 0), figure_colour(rng, 1), figure_colour(rng, 2)];
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = fig.cells[row * fig.w + col];
                if cell != 0 {
                    canvas.set(top + row - r0, left + col - c0, colours[cell as usize - 1]);
                }
            }
        }
        boxes.push(bbox);
    }
    // quantized to 8-bit levels so scenes survive a PNG round trip unchanged
    let data = canvas.data.into_iter().map(|v| to_unit(from_unit(v))).collect();
    Scene::new(Tensor::from_vec(&[3, h, w], data)?, boxes, source_id)
}

/// Generates `n` scenes named `images/toy_NNNNN.png`.
pub fn gen_toy_dataset<R: Rng + ?Sized>(rng: &mut R, cfg: &ToyConfig, n: usize) -> Result<Vec<Scene>> {
    (0..n)
        .map(|i| gen_toy_scene(rng, cfg, format!("images/toy_{i:05}.png")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean absolute error outside the noise box.
    pub outside_l1: f64,
    /// Mean absolute error inside the noise box.
    pub inside_l1: f64,
    /// Fraction of generated crops that D_p scores above 0.5.
    pub dp_fool_rate: f64,
    pub pairs: usize,
}

/// Per-pair `(outside, inside)` mean absolute errors of `generated` vs the ground truth.
pub fn region_l1(generated: &Tensor, pair: &PatchPair) -> Result<(f64, f64)> {
    generated.ensure_same_shape(&pair.y_truth)?;
    let (c, h, w) = generated.dims3()?;
    let (mut outside, mut inside) = (0.0f64, 0.0f64);
    for ch in 0..c {
        for row in 0..h {
            for col in 0..w {
                let i = (ch * h + row) * w + col;
                let d = (generated.data()[i] - pair.y_truth.data()[i]).abs() as f64;
                if pair.z_box.contains(row, col) {
                    inside += d;
                } else {
                    outside += d;
                }
            }
        }
    }
    let n_in = (c * pair.z_box.area()) as f64;
    let n_out = (c * h * w) as f64 - n_in;
    Ok((
        if n_out > 0.0 { outside / n_out } else { 0.0 },
        inside / n_in,
    ))
}

/// Metrics for any patch producer; `generate` maps a pair to a `3 x P x P` output.
pub fn eval_with(
    mut generate: impl FnMut(&PatchPair) -> Result<Tensor>,
    pairs: &[PatchPair],
    dp: &mut PedestrianDiscriminator,
) -> Result<EvalMetrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut outside, mut inside, mut fooled) = (0.0, 0.0, 0usize);
    for pair in pairs {
        let out = generate(pair)?;
        let (o, i) = region_l1(&out, pair)?;
        outside += o;
        inside += i;
        if dp.forward(&crop_region(&out, &pair.z_box)?, Mode::Eval)? > 0.5 {
            fooled += 1;
        }
    }
    let n = pairs.len() as f64;
    Ok(EvalMetrics {
        outside_l1: outside / n,
        inside_l1: inside / n,
        dp_fool_rate: fooled as f64 / n,
        pairs: pairs.len(),
    })
}

/// Evaluates `generator` (eval mode) on held-out pairs against a frozen D_p.
pub fn eval_generator(
    generator: &mut Generator,
    pairs: &[PatchPair],
    dp: &mut PedestrianDiscriminator,
) -> Result<EvalMetrics> {
    eval_with(
        |pair| {
            let out = generator.forward(&pair.x_noisy.clone().unsqueeze0(), Mode::Eval)?;
            out.sample(0)
        },
        pairs,
        dp,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::encode_png;
    use crate::disc_pedestrian::DpConfig;
    use crate::scene::{assemble_dataset, PatchOffset};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn is_figure(scene: &Scene, row: usize, col: usize) -> bool {
        let plane = scene.height() * scene.width();
        let i = row * scene.width() + col;
        (0..3).any(|c| scene.image.data()[c * plane + i].abs() >= FIGURE_MIN)
    }

    #[test]
    fn boxes_are_tight_by_pixel_scan() {
        let cfg = ToyConfig {
            n_peds: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..20 {
            let scene = gen_toy_scene(&mut rng, &cfg, format!("{k}")).unwrap();
            assert_eq!(scene.boxes.len(), 3);
            for b in &scene.boxes {
                // scan a window grown by the gap; figures never share one
                let r0 = b.y.saturating_sub(FIGURE_GAP - 1);
                let c0 = b.x.saturating_sub(FIGURE_GAP - 1);
                let r1 = (b.bottom() + FIGURE_GAP - 1).min(scene.height());
                let c1 = (b.right() + FIGURE_GAP - 1).min(scene.width());
                let (mut lo_r, mut lo_c, mut hi_r, mut hi_c) = (usize::MAX, usize::MAX, 0, 0);
                for row in r0..r1 {
                    for col in c0..c1 {
                        if is_figure(&scene, row, col) {
                            lo_r = lo_r.min(row);
                            lo_c = lo_c.min(col);
                            hi_r = hi_r.max(row);
                            hi_c = hi_c.max(col);
                        }
                    }
                }
                assert_eq!((lo_c, lo_r, hi_c + 1 - lo_c, hi_r + 1 - lo_r), (b.x, b.y, b.w, b.h));
                assert!(b.w >= cfg.min_width);
            }
            for row in 0..scene.height() {
                for col in 0..scene.width() {
                    if is_figure(&scene, row, col) {
                        assert!(scene.boxes.iter().any(|b| b.contains(row, col)));
                    }
                }
            }
        }
    }

    #[test]
    fn blank_scenes_have_only_background_pixels() {
        let cfg = ToyConfig {
            n_peds: 0,
            ..Default::default()
        };
        let scene = gen_toy_scene(&mut ChaCha8Rng::seed_from_u64(1), &cfg, "blank").unwrap();
        assert!(scene.boxes.is_empty());
        assert!(scene.image.data().iter().all(|v| v.abs() <= BACKGROUND_LIMIT));
    }

    #[test]
    fn same_seed_gives_identical_png_bytes() {
        let cfg = ToyConfig::default();
        let render = |seed| {
            let scene = gen_toy_scene(&mut ChaCha8Rng::seed_from_u64(seed), &cfg, "s").unwrap();
            encode_png(&scene.image).unwrap()
        };
        assert_eq!(render(9), render(9));
        assert_ne!(render(9), render(10));
    }

    #[test]
    fn impossible_sizes_are_config_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tall = ToyConfig {
            ped_h_range: (40, 200),
            ..Default::default()
        };
        assert!(matches!(gen_toy_scene(&mut rng, &tall, "x"), Err(Error::Config(_))));
        let crowded = ToyConfig {
            n_peds: 40,
            ..Default::default()
        };
        assert!(matches!(gen_toy_scene(&mut rng, &crowded, "x"), Err(Error::Config(_))));
    }

    #[test]
    fn toy_scenes_assemble_into_valid_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scenes = gen_toy_dataset(&mut rng, &ToyConfig::default(), 8).unwrap();
        let pairs = assemble_dataset(&scenes, 64, &mut rng);
        assert_eq!(pairs.len(), 8);
        for p in &pairs {
            assert!(p.z_box.fits_in(64, 64));
        }
    }

    fn dp() -> PedestrianDiscriminator {
        PedestrianDiscriminator::new(DpConfig::scaled(2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn pair(seed: u64) -> PatchPair {
        let y = Tensor::from_vec(&[3, 32, 32], (0..3 * 32 * 32).map(|i| ((i % 9) as f32 - 4.0) / 4.0).collect())
            .unwrap();
        PatchPair::from_truth(y, BBox::real(6, 4, 16, 20).unwrap(), seed, PatchOffset::default(), "p").unwrap()
    }

    #[test]
    fn identity_producer_scores_zero_error() {
        let pairs = [pair(1), pair(2)];
        let m = eval_with(|p| Ok(p.y_truth.clone()), &pairs, &mut dp()).unwrap();
        assert_eq!((m.outside_l1, m.inside_l1), (0.0, 0.0));
        assert!((0.0..=1.0).contains(&m.dp_fool_rate));
    }

    #[test]
    fn passthrough_producer_reports_noise_error_inside() {
        let pairs = [pair(3), pair(4)];
        let m = eval_with(|p| Ok(p.x_noisy.clone()), &pairs, &mut dp()).unwrap();
        let expected: f64 = pairs
            .iter()
            .map(|p| {
                let b = p.z_box;
                let mut total = 0.0;
                for c in 0..3 {
                    for r in b.y..b.bottom() {
                        for col in b.x..b.right() {
                            let i = (c * 32 + r) * 32 + col;
                            total += (p.x_noisy.data()[i] - p.y_truth.data()[i]).abs() as f64;
                        }
                    }
                }
                total / (3 * b.area()) as f64
            })
            .sum::<f64>()
            / 2.0;
        assert_eq!(m.outside_l1, 0.0);
        assert!((m.inside_l1 - expected).abs() < 1e-9);
        assert!(m.inside_l1 > 0.3);
    }

    #[test]
    fn empty_pairs_are_rejected() {
        assert!(matches!(eval_with(|p| Ok(p.y_truth.clone()), &[], &mut dp()), Err(Error::EmptyDataset)));
    }
}
