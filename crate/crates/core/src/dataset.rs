//! On-disk formats: scene annotation JSON, 8-bit RGB PNG images, the prepared
//! patch-pair dataset, and the Cityscapes person-polygon adapter.

use std::collections::HashSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{assemble_dataset, filter_boxes, BBox, BoxLabel, PatchOffset, PatchPair, Scene};
use crate::tensor::Tensor;

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const PAIRS_FILE: &str = "pairs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub image: String,
    pub boxes: Vec<BBox>,
}

/// `{"scenes": [{"image": "...png", "boxes": [...]}]}`
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationDoc {
    pub scenes: Vec<SceneAnnotation>,
}

impl AnnotationDoc {
    pub fn box_count(&self) -> usize {
        self.scenes.iter().map(|s| s.boxes.len()).sum()
    }

    pub fn count_label(&self, label: BoxLabel) -> usize {
        self.scenes
            .iter()
            .flat_map(|s| &s.boxes)
            .filter(|b| b.label == label)
            .count()
    }
}

pub fn load_annotations(path: &Path) -> Result<AnnotationDoc> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn save_annotations(doc: &AnnotationDoc, path: &Path) -> Result<()> {
    let w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(w, doc)?;
    Ok(())
}

/// Annotation entries for in-memory scenes; `source_id` is the image path.
pub fn annotations_for(scenes: &[Scene]) -> AnnotationDoc {
    AnnotationDoc {
        scenes: scenes
            .iter()
            .map(|s| SceneAnnotation {
                image: s.source_id.clone(),
                boxes: s.boxes.clone(),
            })
            .collect(),
    }
}

fn image_err(path: &Path, message: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// 8-bit value `v` maps to `v / 127.5 - 1`.
pub fn to_unit(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

pub fn from_unit(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Decodes a PNG into a `3 x H x W` tensor in `[-1, 1]`. Gray is replicated, alpha dropped.
pub fn read_png(path: &Path) -> Result<Tensor> {
    let mut decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(path)?));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| image_err(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(image_err(path, "unexpanded palette")),
    };
    let mut data = vec![0.0f32; 3 * h * w];
    for p in 0..h * w {
        let px = &buf[p * channels..(p + 1) * channels];
        for c in 0..3 {
            let v = if channels < 3 { px[0] } else { px[c] };
            data[c * h * w + p] = to_unit(v);
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Encodes a `3 x H x W` tensor in `[-1, 1]` as 8-bit RGB.
pub fn encode_png(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        return Err(Error::shape(format!("PNG export needs 3 channels, got {c}")));
    }
    let mut rgb = vec![0u8; 3 * h * w];
    let data = image.data();
    for p in 0..h * w {
        for ch in 0..3 {
            rgb[p * 3 + ch] = from_unit(data[ch * h * w + p]);
        }
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| image_err(Path::new("<memory>"), e))?;
        writer
            .write_image_data(&rgb)
            .map_err(|e| image_err(Path::new("<memory>"), e))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_png(image)?)?;
    Ok(())
}

/// Binary placement mask: any non-zero pixel is allowed. Returns `(mask, width, height)`.
pub fn read_mask(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let image = read_png(path)?;
    let (_, h, w) = image.dims3()?;
    let plane = h * w;
    let mask = (0..plane)
        .map(|p| (0..3).any(|c| image.data()[c * plane + p] > -1.0))
        .collect();
    Ok((mask, w, h))
}

/// Loads every scene of an annotation file; image paths are relative to its directory.
pub fn load_scenes(annotation_path: &Path) -> Result<Vec<Scene>> {
    let doc = load_annotations(annotation_path)?;
    let root = annotation_path.parent().unwrap_or(Path::new("."));
    doc.scenes
        .into_iter()
        .map(|entry| {
            let image = read_png(&root.join(&entry.image))?;
            Scene::new(image, entry.boxes, entry.image)
        })
        .collect()
}

/// Writes scene images under `dir` at their `source_id` paths plus `annotations.json`.
pub fn save_scenes(scenes: &[Scene], dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for scene in scenes {
        write_png(&dir.join(&scene.source_id), &scene.image)?;
    }
    let path = dir.join(ANNOTATIONS_FILE);
    save_annotations(&annotations_for(scenes), &path)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub patch: String,
    #[serde(rename = "box")]
    pub z_box: BBox,
    pub noise_seed: u64,
    pub offset: PatchOffset,
    pub source: String,
    pub split: Split,
}

/// Manifest of a prepared dataset: ground-truth patches are stored as PNGs and
/// the noisy inputs are regenerated from per-pair noise seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsManifest {
    pub patch_size: usize,
    pub seed: u64,
    pub min_h: usize,
    pub min_w: usize,
    pub pairs: Vec<PairEntry>,
}

#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub min_h: usize,
    pub min_w: usize,
    pub patch: usize,
    pub seed: u64,
    /// Fraction of scenes held out for evaluation.
    pub test_fraction: f64,
    /// Optional `(image, box index)` whitelist applied after filtering.
    pub include: Option<HashSet<(String, usize)>>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            min_h: crate::scene::DEFAULT_MIN_HEIGHT,
            min_w: crate::scene::DEFAULT_MIN_WIDTH,
            patch: crate::scene::DEFAULT_PATCH,
            seed: 0,
            test_fraction: 0.2,
            include: None,
        }
    }
}

/// Parses an include list: one `<image path> <box index>` per line, `#` comments.
pub fn parse_include_list(text: &str) -> Result<HashSet<(String, usize)>> {
    let mut set = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (image, index) = line
            .rsplit_once(char::is_whitespace)
            .ok_or_else(|| Error::config(format!("include list line {}: expected '<image> <index>'", n + 1)))?;
        let index = index
            .parse()
            .map_err(|_| Error::config(format!("include list line {}: bad index", n + 1)))?;
        set.insert((image.trim().to_string(), index));
    }
    Ok(set)
}

/// Box filtering, optional curation, scene-level split and pair assembly.
pub fn prepare_pairs<R: RngCore>(
    scenes: &[Scene],
    cfg: &PrepConfig,
    rng: &mut R,
) -> (Vec<PatchPair>, Vec<PatchPair>) {
    let filtered: Vec<Scene> = scenes
        .iter()
        .map(|s| {
            let mut kept = filter_boxes(&s.boxes, cfg.min_h, cfg.min_w);
            if let Some(include) = &cfg.include {
                // indices refer to the original box list
                kept = s
                    .boxes
                    .iter()
                    .enumerate()
                    .filter(|(i, b)| kept.contains(b) && include.contains(&(s.source_id.clone(), *i)))
                    .map(|(_, b)| *b)
                    .collect();
            }
            Scene {
                boxes: kept,
                ..s.clone()
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..filtered.len()).collect();
    order.shuffle(rng);
    let n_test = (cfg.test_fraction * filtered.len() as f64).round() as usize;
    let mut test_idx: Vec<usize> = order[..n_test.min(order.len())].to_vec();
    let mut train_idx: Vec<usize> = order[n_test.min(order.len())..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| filtered[i].clone()).collect::<Vec<_>>();
    let train = assemble_dataset(&pick(&train_idx), cfg.patch, rng);
    let test = assemble_dataset(&pick(&test_idx), cfg.patch, rng);
    (train, test)
}

/// Writes ground-truth patches and `pairs.json` under `dir`.
pub fn save_pairs(
    dir: &Path,
    cfg: &PrepConfig,
    train: &[PatchPair],
    test: &[PatchPair],
) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("patches"))?;
    let mut entries = Vec::with_capacity(train.len() + test.len());
    let tagged = train
        .iter()
        .map(|p| (p, Split::Train))
        .chain(test.iter().map(|p| (p, Split::Test)));
    for (i, (pair, split)) in tagged.enumerate() {
        let rel = format!("patches/{i:06}.png");
        write_png(&dir.join(&rel), &pair.y_truth)?;
        entries.push(PairEntry {
            patch: rel,
            z_box: pair.z_box,
            noise_seed: pair.noise_seed,
            offset: pair.offset,
            source: pair.source_id.clone(),
            split,
        });
    }
    let manifest = PairsManifest {
        patch_size: cfg.patch,
        seed: cfg.seed,
        min_h: cfg.min_h,
        min_w: cfg.min_w,
        pairs: entries,
    };
    let path = dir.join(PAIRS_FILE);
    serde_json::to_writer_pretty(BufWriter::new(fs::File::create(&path)?), &manifest)?;
    Ok(path)
}

pub fn load_manifest(dir: &Path) -> Result<PairsManifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(PAIRS_FILE))?)?)
}

/// Loads the pairs of one split, regenerating the noisy inputs.
pub fn load_pairs(dir: &Path, split: Split) -> Result<Vec<PatchPair>> {
    let manifest = load_manifest(dir)?;
    manifest
        .pairs
        .iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let y = read_png(&dir.join(&e.patch))?;
            if y.shape() != [3, manifest.patch_size, manifest.patch_size] {
                return Err(Error::shape(format!("{} has shape {:?}", e.patch, y.shape())));
            }
            PatchPair::from_truth(y, e.z_box, e.noise_seed, e.offset, e.source.clone())
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct CityscapesObject {
    label: String,
    polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
struct CityscapesPolygons {
    #[serde(rename = "imgHeight")]
    height: usize,
    #[serde(rename = "imgWidth")]
    width: usize,
    objects: Vec<CityscapesObject>,
}

/// Tight boxes around every `person` polygon of a Cityscapes `gtFine_polygons.json`,
/// clipped to the image.
pub fn cityscapes_person_boxes(polygons_json: &str) -> Result<Vec<BBox>> {
    let doc: CityscapesPolygons = serde_json::from_str(polygons_json)?;
    let mut boxes = Vec::new();
    for obj in doc.objects.iter().filter(|o| o.label == "person") {
        if obj.polygon.is_empty() {
            continue;
        }
        let clip = |v: f64, limit: usize| v.floor().clamp(0.0, (limit - 1) as f64) as usize;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &[x, y] in &obj.polygon {
            let (px, py) = (clip(x, doc.width), clip(y, doc.height));
            x0 = x0.min(px);
            y0 = y0.min(py);
            x1 = x1.max(px);
            y1 = y1.max(py);
        }
        boxes.push(BBox::real(x0, y0, x1 - x0 + 1, y1 - y0 + 1)?);
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eight_bit_values_round_trip_through_unit_range() {
        for v in 0..=255u8 {
            assert_eq!(from_unit(to_unit(v)), v);
        }
        assert_eq!(to_unit(0), -1.0);
        assert_eq!(to_unit(255), 1.0);
    }

    #[test]
    fn png_round_trip_is_exact_for_quantized_images() {
        let dir = tempfile::tempdir().unwrap();
        let data = (0..3 * 5 * 7).map(|i| to_unit((i * 37 % 256) as u8)).collect();
        let img = Tensor::from_vec(&[3, 5, 7], data).unwrap();
        let path = dir.path().join("a/b.png");
        write_png(&path, &img).unwrap();
        assert_eq!(read_png(&path).unwrap(), img);
    }

    #[test]
    fn annotation_schema_matches_documented_shape() {
        let json = r#"{"scenes":[{"image":"a.png","boxes":[{"x":1,"y":2,"w":3,"h":4,"label":"real"}]}]}"#;
        let doc: AnnotationDoc = serde_json::from_str(json).unwrap();
        assert_eq!(doc.scenes[0].boxes[0], BBox::real(1, 2, 3, 4).unwrap());
        assert_eq!(serde_json::to_string(&doc).unwrap(), json);
        let empty = serde_json::to_string(&AnnotationDoc::default()).unwrap();
        assert_eq!(empty, r#"{"scenes":[]}"#);
    }

    #[test]
    fn cityscapes_polygons_become_tight_boxes() {
        let json = r#"{"imgHeight": 100, "imgWidth": 200, "objects": [
            {"label": "person", "polygon": [[10, 20], [30, 25], [15, 90]]},
            {"label": "car", "polygon": [[0, 0], [50, 50]]},
            {"label": "person", "polygon": [[190, 80], [250, 120]]}
        ]}"#;
        let boxes = cityscapes_person_boxes(json).unwrap();
        assert_eq!(boxes, vec![
            BBox::real(10, 20, 21, 71).unwrap(),
            BBox::real(190, 80, 10, 20).unwrap(),
        ]);
    }

    #[test]
    fn include_list_parsing() {
        let set = parse_include_list("# comment\nimages/a b.png 2\n\nx.png 0\n").unwrap();
        assert!(set.contains(&("images/a b.png".to_string(), 2)));
        assert!(set.contains(&("x.png".to_string(), 0)));
        assert!(parse_include_list("nonsense").is_err());
    }

    #[test]
    fn prepared_pairs_survive_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_vec(&[3, 40, 60], (0..3 * 40 * 60).map(|i| to_unit((i % 256) as u8)).collect())
            .unwrap();
        let scenes: Vec<Scene> = (0..4)
            .map(|i| {
                Scene::new(img.clone(), vec![BBox::real(5 + i, 3, 10, 30).unwrap()], format!("s{i}.png"))
                    .unwrap()
            })
            .collect();
        let cfg = PrepConfig {
            min_h: 20,
            min_w: 8,
            patch: 32,
            seed: 1,
            test_fraction: 0.25,
            include: None,
        };
        let (train, test) = prepare_pairs(&scenes, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!((train.len(), test.len()), (3, 1));
        save_pairs(dir.path(), &cfg, &train, &test).unwrap();
        assert_eq!(load_pairs(dir.path(), Split::Train).unwrap(), train);
        assert_eq!(load_pairs(dir.path(), Split::Test).unwrap(), test);
    }
}
