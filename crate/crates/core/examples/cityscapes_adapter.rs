//! Converts Cityscapes `*_gtFine_polygons.json` person polygons into the annotation schema.
//!
//! `cargo run --example cityscapes_adapter -- <polygons.json> <image path>`; without
//! arguments a small inline document is converted.

use psgan::dataset::{cityscapes_person_boxes, AnnotationDoc, SceneAnnotation};
use psgan::scene::filter_boxes;

const SAMPLE: &str = r#"{"imgHeight": 1024, "imgWidth": 2048, "objects": [
  {"label": "road", "polygon": [[0, 600], [2047, 600], [2047, 1023], [0, 1023]]},
  {"label": "person", "polygon": [[900, 410], [930, 405], [945, 560], [905, 565]]},
  {"label": "person", "polygon": [[1500, 500], [1512, 498], [1515, 540], [1501, 541]]}
]}"#;

fn main() -> psgan::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (json, image) = match args.as_slice() {
        [polygons, image] => (std::fs::read_to_string(polygons)?, image.clone()),
        _ => (SAMPLE.to_string(), "frankfurt_000000_000294_leftImg8bit.png".to_string()),
    };
    let boxes = cityscapes_person_boxes(&json)?;
    let kept = filter_boxes(&boxes, 70, 25);
    println!("{} person boxes, {} after filtering", boxes.len(), kept.len());
    let doc = AnnotationDoc {
        scenes: vec![SceneAnnotation { image, boxes: kept }],
    };
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}
