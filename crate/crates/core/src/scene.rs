//! Scenes, pedestrian boxes and the patch-pair preparation protocol:
//! box filtering, patch cropping, noise masking and dataset assembly.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Minimum pedestrian height kept by [`filter_boxes`] on full-resolution street scenes.
pub const DEFAULT_MIN_HEIGHT: usize = 70;
/// Minimum pedestrian width kept by [`filter_boxes`].
pub const DEFAULT_MIN_WIDTH: usize = 25;
pub const DEFAULT_PATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxLabel {
    Real,
    Synthetic,
}

/// Axis-aligned pixel rectangle. `x`/`y` are the left/top edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub label: BoxLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f32>,
}

impl BBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize, label: BoxLabel) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidBox(format!("{w}x{h} box has no area")));
        }
        Ok(BBox {
            x,
            y,
            w,
            h,
            label,
            score: None,
        })
    }

    pub fn real(x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        Self::new(x, y, w, h, BoxLabel::Real)
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Integer center `(row, col)`.
    pub fn center(&self) -> (usize, usize) {
        (self.y + self.h / 2, self.x + self.w / 2)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y && row < self.bottom() && col >= self.x && col < self.right()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    pub fn ensure_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.fits_in(width, height) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "box ({}, {}, {}x{}) escapes a {width}x{height} image",
                self.x, self.y, self.w, self.h
            )))
        }
    }

    /// This box expressed in the coordinates of an enclosing frame placed at `(top, left)`.
    pub fn translated(&self, top: isize, left: isize) -> Result<Self> {
        let x = self.x as isize + left;
        let y = self.y as isize + top;
        if x < 0 || y < 0 {
            return Err(Error::OutOfBounds(format!("box moved to ({x}, {y})")));
        }
        Ok(BBox {
            x: x as usize,
            y: y as usize,
            ..*self
        })
    }

    /// Composes a box given inside `self`'s frame into the frame `self` lives in.
    pub fn compose(&self, inner: &BBox) -> BBox {
        BBox {
            x: self.x + inner.x,
            y: self.y + inner.y,
            ..*inner
        }
    }

    pub fn intersection(&self, other: &BBox) -> usize {
        let w = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let h = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// A full RGB image (`3 x H x W`, values in `[-1, 1]`) with its pedestrian boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Tensor,
    pub boxes: Vec<BBox>,
    pub source_id: String,
}

impl Scene {
    pub fn new(image: Tensor, boxes: Vec<BBox>, source_id: impl Into<String>) -> Result<Self> {
        let scene = Scene {
            image,
            boxes,
            source_id: source_id.into(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.image.dims3()?;
        if c != 3 {
            return Err(Error::shape(format!("scene image has {c} channels")));
        }
        for b in &self.boxes {
            b.ensure_inside(w, h)?;
        }
        Ok(())
    }
}

/// Top-left corner of a patch inside its scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatchOffset {
    pub top: usize,
    pub left: usize,
}

/// A square crop of a scene around one box.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCrop {
    pub image: Tensor,
    /// The requested box in patch coordinates.
    pub box_in_patch: BBox,
    pub offset: PatchOffset,
}

/// The training triple: noisy input, ground truth, and the noise box.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub x_noisy: Tensor,
    pub y_truth: Tensor,
    pub z_box: BBox,
    pub patch_size: usize,
    pub offset: PatchOffset,
    pub source_id: String,
    pub noise_seed: u64,
}

impl PatchPair {
    /// Rebuilds the noisy input from the ground truth and a noise seed.
    pub fn from_truth(
        y_truth: Tensor,
        z_box: BBox,
        noise_seed: u64,
        offset: PatchOffset,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let (c, h, w) = y_truth.dims3()?;
        if c != 3 || h != w {
            return Err(Error::shape(format!(
                "patch must be 3 x P x P, got {:?}",
                y_truth.shape()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let x_noisy = mask_with_noise(&y_truth, &z_box, &mut rng)?;
        Ok(PatchPair {
            x_noisy,
            y_truth,
            z_box,
            patch_size: h,
            offset,
            source_id: source_id.into(),
            noise_seed,
        })
    }
}

/// Keeps boxes with `h >= min_h` and `w >= min_w`, preserving order.
pub fn filter_boxes(boxes: &[BBox], min_h: usize, min_w: usize) -> Vec<BBox> {
    boxes
        .iter()
        .filter(|b| b.h >= min_h && b.w >= min_w)
        .copied()
        .collect()
}

/// Crops a `patch x patch` window centred on `bbox`, shifted inward at image borders.
pub fn crop_patch(scene: &Scene, bbox: &BBox, patch: usize) -> Result<PatchCrop> {
    let (h, w) = (scene.height(), scene.width());
    if h < patch || w < patch {
        return Err(Error::SceneTooSmall {
            width: w,
            height: h,
            patch,
        });
    }
    if bbox.h > patch || bbox.w > patch {
        return Err(Error::BoxTooLarge {
            w: bbox.w,
            h: bbox.h,
            patch,
        });
    }
    bbox.ensure_inside(w, h)?;
    let (cy, cx) = bbox.center();
    let half = patch / 2;
    let top = cy.saturating_sub(half).min(h - patch);
    let left = cx.saturating_sub(half).min(w - patch);
    let window = BBox::new(left, top, patch, patch, BoxLabel::Real)?;
    let image = crop_region(&scene.image, &window)?;
    let box_in_patch = bbox.translated(-(top as isize), -(left as isize))?;
    Ok(PatchCrop {
        image,
        box_in_patch,
        offset: PatchOffset { top, left },
    })
}

/// Replaces the box interior with i.i.d. uniform `[-1, 1]` noise, channel by channel.
pub fn mask_with_noise<R: Rng + ?Sized>(patch: &Tensor, bbox: &BBox, rng: &mut R) -> Result<Tensor> {
    let (c, h, w) = patch.dims3()?;
    bbox.ensure_inside(w, h)?;
    let mut out = patch.clone();
    let data = out.data_mut();
    for ch in 0..c {
        for row in bbox.y..bbox.bottom() {
            let start = (ch * h + row) * w;
            for v in &mut data[start + bbox.x..start + bbox.right()] {
                *v = rng.random_range(-1.0f32..=1.0);
            }
        }
    }
    Ok(out)
}

/// Exact sub-tensor copy of `bbox` from a `C x H x W` image.
pub fn crop_region<T: crate::tensor::Scalar>(image: &Tensor<T>, bbox: &BBox) -> Result<Tensor<T>> {
    let (c, h, w) = image.dims3()?;
    bbox.ensure_inside(w, h)?;
    let mut data = Vec::with_capacity(c * bbox.area());
    for ch in 0..c {
        for row in bbox.y..bbox.bottom() {
            let start = (ch * h + row) * w;
            data.extend_from_slice(&image.data()[start + bbox.x..start + bbox.right()]);
        }
    }
    Tensor::from_vec(&[c, bbox.h, bbox.w], data)
}

/// Builds one [`PatchPair`] per box: [`crop_patch`] then [`mask_with_noise`].
///
/// Every box draws a noise seed from `rng` whether or not it can be cropped,
/// so skipped boxes never shift the noise of later pairs.
pub fn assemble_dataset<R: RngCore + ?Sized>(
    scenes: &[Scene],
    patch: usize,
    rng: &mut R,
) -> Vec<PatchPair> {
    let mut pairs = Vec::new();
    for scene in scenes {
        for bbox in &scene.boxes {
            let seed = rng.next_u64();
            let built = crop_patch(scene, bbox, patch).and_then(|crop| {
                PatchPair::from_truth(
                    crop.image,
                    crop.box_in_patch,
                    seed,
                    crop.offset,
                    scene.source_id.clone(),
                )
            });
            match built {
                Ok(pair) => pairs.push(pair),
                Err(err) => log::warn!(
                    "skipping box at ({}, {}) in {}: {err}",
                    bbox.x,
                    bbox.y,
                    scene.source_id
                ),
            }
        }
    }
    pairs
}
