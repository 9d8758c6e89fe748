//! Inference: propose noise boxes on a scene, fill them with the generator and
//! paste the results back, producing augmented scenes with synthetic labels.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{annotations_for, save_annotations};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::Mode;
use crate::scene::{crop_patch, mask_with_noise, BBox, BoxLabel, PatchOffset, Scene};
use crate::tensor::Tensor;

/// Proposals overlapping any existing box above this IoU are rejected.
pub const MAX_IOU: f64 = 0.3;
/// Attempts allowed per requested box.
pub const ATTEMPTS_PER_BOX: usize = 1000;

/// Binary image of allowed foot positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementMask {
    pub width: usize,
    pub height: usize,
    pub allowed: Vec<bool>,
}

impl PlacementMask {
    pub fn new(width: usize, height: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != width * height {
            return Err(Error::shape(format!(
                "mask has {} cells, expected {width}x{height}",
                allowed.len()
            )));
        }
        Ok(PlacementMask {
            width,
            height,
            allowed,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        PlacementMask {
            width,
            height,
            allowed: vec![true; width * height],
        }
    }
}

/// Sizes of proposed boxes: height range and width/height aspect range, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRange {
    pub h_min: usize,
    pub h_max: usize,
    pub aspect_min: f64,
    pub aspect_max: f64,
}

impl SizeRange {
    fn width_for(&self, h: usize, aspect: f64) -> usize {
        ((h as f64 * aspect).round() as usize).max(1)
    }

    /// Smallest box this range can emit must pass the `(min_h, min_w)` filter.
    pub fn validate(&self, min_h: usize, min_w: usize) -> Result<()> {
        if self.h_min == 0 || self.h_min > self.h_max {
            return Err(Error::config(format!("height range {}..={} is empty", self.h_min, self.h_max)));
        }
        if !(self.aspect_min > 0.0 && self.aspect_min <= self.aspect_max && self.aspect_max.is_finite()) {
            return Err(Error::config("aspect range must be positive and ordered"));
        }
        if self.h_min < min_h || self.width_for(self.h_min, self.aspect_min) < min_w {
            return Err(Error::config(format!(
                "size range admits boxes below the {min_h}x{min_w} (h x w) thresholds"
            )));
        }
        Ok(())
    }
}

/// Samples up to `n` boxes whose bottom-centre pixel is uniform over the allowed
/// mask pixels, each with IoU at most [`MAX_IOU`] against the scene's boxes and
/// the boxes accepted so far. Sizes are not re-validated here.
pub fn propose_boxes<R: Rng + ?Sized>(
    scene: &Scene,
    mask: Option<&PlacementMask>,
    n: usize,
    size: &SizeRange,
    rng: &mut R,
) -> Vec<BBox> {
    let (w, h) = (scene.width(), scene.height());
    let anchors: Vec<usize> = match mask {
        Some(m) if m.width != w || m.height != h => {
            log::warn!(
                "placement mask is {}x{} but {} is {w}x{h}; no boxes proposed",
                m.width,
                m.height,
                scene.source_id
            );
            return Vec::new();
        }
        Some(m) => (0..w * h).filter(|&i| m.allowed[i]).collect(),
        None => (0..w * h).collect(),
    };
    if anchors.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut accepted: Vec<BBox> = Vec::with_capacity(n);
    for _ in 0..ATTEMPTS_PER_BOX * n {
        if accepted.len() == n {
            break;
        }
        let anchor = anchors[rng.random_range(0..anchors.len())];
        let (row, col) = (anchor / w, anchor % w);
        let bh = rng.random_range(size.h_min..=size.h_max);
        let bw = size.width_for(bh, rng.random_range(size.aspect_min..=size.aspect_max));
        let (Some(top), Some(left)) = ((row + 1).checked_sub(bh), col.checked_sub(bw / 2)) else {
            continue;
        };
        let Ok(candidate) = BBox::new(left, top, bw, bh, BoxLabel::Synthetic) else {
            continue;
        };
        if !candidate.fits_in(w, h) {
            continue;
        }
        if scene
            .boxes
            .iter()
            .chain(&accepted)
            .any(|b| b.iou(&candidate) > MAX_IOU)
        {
            continue;
        }
        accepted.push(candidate);
    }
    if accepted.len() < n {
        log::warn!(
            "{}: placed {} of {n} boxes within the attempt budget",
            scene.source_id,
            accepted.len()
        );
    }
    accepted
}

/// A generated patch with its placement in the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedPatch {
    pub patch: Tensor,
    pub offset: PatchOffset,
    pub box_in_patch: BBox,
}

/// Crops around `bbox`, fills it with noise from `rng` and runs the generator in eval mode.
pub fn synthesize_patch<R: Rng + ?Sized>(
    generator: &mut Generator,
    scene: &Scene,
    bbox: &BBox,
    rng: &mut R,
) -> Result<SynthesizedPatch> {
    let crop = crop_patch(scene, bbox, generator.config().patch_size())?;
    let noisy = mask_with_noise(&crop.image, &crop.box_in_patch, rng)?;
    let patch = generator.forward(&noisy.unsqueeze0(), Mode::Eval)?.sample(0)?;
    Ok(SynthesizedPatch {
        patch,
        offset: crop.offset,
        box_in_patch: crop.box_in_patch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PasteMode {
    /// Only pixels inside the box are replaced.
    #[default]
    BoxInterior,
    /// The whole generated patch is pasted.
    FullPatch,
}

/// Pastes `patch` at `offset` and appends `bbox` (scene coordinates) as a synthetic box.
pub fn composite(
    scene: &Scene,
    patch: &Tensor,
    offset: PatchOffset,
    bbox: &BBox,
    mode: PasteMode,
) -> Result<Scene> {
    let (c, ph, pw) = patch.dims3()?;
    let (h, w) = (scene.height(), scene.width());
    if c != 3 || offset.top + ph > h || offset.left + pw > w {
        return Err(Error::OutOfBounds(format!(
            "{c}x{ph}x{pw} patch at ({}, {}) does not fit a {w}x{h} scene",
            offset.top, offset.left
        )));
    }
    let window = BBox::new(offset.left, offset.top, pw, ph, BoxLabel::Real)?;
    if bbox.intersection(&window) != bbox.area() {
        return Err(Error::OutOfBounds(format!(
            "box at ({}, {}) is not covered by the patch",
            bbox.x, bbox.y
        )));
    }
    let region = match mode {
        PasteMode::BoxInterior => *bbox,
        PasteMode::FullPatch => window,
    };
    let mut out = scene.clone();
    let dst = out.image.data_mut();
    for ch in 0..3 {
        for row in region.y..region.bottom() {
            let src_row = row - offset.top;
            let s = (ch * ph + src_row) * pw + (region.x - offset.left);
            let d = (ch * h + row) * w + region.x;
            dst[d..d + region.w].copy_from_slice(&patch.data()[s..s + region.w]);
        }
    }
    out.boxes.push(BBox {
        label: BoxLabel::Synthetic,
        ..*bbox
    });
    Ok(out)
}

/// Writes the annotation document for `scenes`, real and synthetic labels kept.
pub fn export_annotations(scenes: &[Scene], path: &Path) -> Result<()> {
    save_annotations(&annotations_for(scenes), path)
}

/// One augmented scene in a synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEntry {
    pub source: String,
    pub image: String,
    pub synthetic: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub size: SizeRange,
    pub paste: PasteMode,
    pub scenes: Vec<SynthEntry>,
}

/// Proposes `n` boxes on `scene` and fills each in turn.
pub fn augment_scene<R: Rng + ?Sized>(
    generator: &mut Generator,
    scene: &Scene,
    mask: Option<&PlacementMask>,
    n: usize,
    size: &SizeRange,
    mode: PasteMode,
    rng: &mut R,
) -> Result<(Scene, Vec<BBox>)> {
    let proposals = propose_boxes(scene, mask, n, size, rng);
    let mut current = scene.clone();
    let mut placed = Vec::with_capacity(proposals.len());
    for bbox in proposals {
        let synth = synthesize_patch(generator, &current, &bbox, rng)?;
        current = composite(&current, &synth.patch, synth.offset, &bbox, mode)?;
        placed.push(*current.boxes.last().expect("composite appends a box"));
    }
    Ok((current, placed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GeneratorConfig;
    use crate::scene::crop_region;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(w: usize, h: usize, boxes: Vec<BBox>) -> Scene {
        let data = (0..3 * w * h).map(|i| ((i * 7 % 13) as f32 - 6.0) / 6.0).collect();
        Scene::new(Tensor::from_vec(&[3, h, w], data).unwrap(), boxes, "s").unwrap()
    }

    fn sizes() -> SizeRange {
        SizeRange {
            h_min: 12,
            h_max: 20,
            aspect_min: 0.4,
            aspect_max: 0.6,
        }
    }

    #[test]
    fn empty_mask_yields_no_boxes() {
        let s = scene(40, 30, vec![]);
        let mask = PlacementMask::new(40, 30, vec![false; 1200]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(propose_boxes(&s, Some(&mask), 3, &sizes(), &mut rng).is_empty());
    }

    #[test]
    fn proposals_are_reproducible() {
        let s = scene(40, 30, vec![]);
        let run = || propose_boxes(&s, None, 1, &sizes(), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(run(), run());
        assert_eq!(run().len(), 1);
    }

    #[test]
    fn proposals_respect_mask_anchor() {
        let s = scene(40, 30, vec![]);
        let mut allowed = vec![false; 1200];
        allowed[25 * 40 + 20] = true;
        let mask = PlacementMask::new(40, 30, allowed).unwrap();
        let boxes = propose_boxes(&s, Some(&mask), 1, &sizes(), &mut ChaCha8Rng::seed_from_u64(1));
        let b = boxes[0];
        assert_eq!(b.bottom(), 26);
        assert_eq!(b.x + b.w / 2, 20);
        assert_eq!(b.label, BoxLabel::Synthetic);
    }

    #[test]
    fn size_range_must_respect_thresholds() {
        let paper = SizeRange {
            h_min: 70,
            h_max: 120,
            aspect_min: 0.36,
            aspect_max: 0.5,
        };
        assert!(paper.validate(70, 25).is_ok());
        assert!(SizeRange { h_min: 69, ..paper }.validate(70, 25).is_err());
        assert!(SizeRange { aspect_min: 0.3, ..paper }.validate(70, 25).is_err());
    }

    #[test]
    fn composite_copies_box_and_nothing_else() {
        let s = scene(50, 40, vec![BBox::real(1, 1, 4, 4).unwrap()]);
        let patch = Tensor::full(&[3, 16, 16], 0.25f32);
        let offset = PatchOffset { top: 10, left: 20 };
        let bbox = BBox::new(24, 12, 5, 9, BoxLabel::Synthetic).unwrap();
        let out = composite(&s, &patch, offset, &bbox, PasteMode::BoxInterior).unwrap();
        assert!(crop_region(&out.image, &bbox).unwrap().data().iter().all(|&v| v == 0.25));
        for c in 0..3 {
            for r in 0..40 {
                for col in 0..50 {
                    if !bbox.contains(r, col) {
                        let i = (c * 40 + r) * 50 + col;
                        assert_eq!(out.image.data()[i].to_bits(), s.image.data()[i].to_bits());
                    }
                }
            }
        }
        assert_eq!(out.boxes.len(), 2);
        assert_eq!(out.boxes[1].label, BoxLabel::Synthetic);
        let full = composite(&s, &patch, offset, &bbox, PasteMode::FullPatch).unwrap();
        let window = BBox::real(20, 10, 16, 16).unwrap();
        assert!(crop_region(&full.image, &window).unwrap().data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn composite_rejects_misplaced_patches() {
        let s = scene(30, 30, vec![]);
        let patch = Tensor::zeros(&[3, 16, 16]);
        let bbox = BBox::real(20, 20, 4, 4).unwrap();
        let far = PatchOffset { top: 20, left: 20 };
        assert!(matches!(composite(&s, &patch, far, &bbox, PasteMode::BoxInterior), Err(Error::OutOfBounds(_))));
        let off = PatchOffset { top: 0, left: 0 };
        assert!(matches!(composite(&s, &patch, off, &bbox, PasteMode::BoxInterior), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn synthesis_is_seeded_and_in_range() {
        let mut g = Generator::new(GeneratorConfig::for_patch(16, 4).unwrap(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let s = scene(40, 30, vec![]);
        let bbox = BBox::new(10, 8, 5, 12, BoxLabel::Synthetic).unwrap();
        let a = synthesize_patch(&mut g, &s, &bbox, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = synthesize_patch(&mut g, &s, &bbox, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.patch.shape(), &[3, 16, 16]);
        assert!(a.patch.data().iter().all(|v| v.abs() < 1.0));
    }

    proptest! {
        #[test]
        fn successive_calls_never_overlap(seed in any::<u64>(), n in 1usize..5) {
            let mut s = scene(60, 40, vec![]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut all = Vec::new();
            for _ in 0..2 {
                let boxes = propose_boxes(&s, None, n, &sizes(), &mut rng);
                s.boxes.extend(&boxes);
                all.extend(boxes);
            }
            for (i, a) in all.iter().enumerate() {
                prop_assert!(a.fits_in(60, 40));
                prop_assert!(a.h >= 12 && a.h <= 20);
                for b in &all[i + 1..] {
                    // pixel-count oracle, independent of BBox::iou
                    let mut inter = 0usize;
                    for r in 0..40 {
                        for c in 0..60 {
                            if a.contains(r, c) && b.contains(r, c) {
                                inter += 1;
                            }
                        }
                    }
                    let union = a.w * a.h + b.w * b.h - inter;
                    prop_assert!(inter as f64 / union as f64 <= MAX_IOU + 1e-12);
                }
            }
        }
    }
}
