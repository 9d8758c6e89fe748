//! Box filtering, patch cropping at borders and noise masking on a full-size scene.

use psgan::scene::{crop_patch, filter_boxes, mask_with_noise, BBox, Scene};
use psgan::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> psgan::error::Result<()> {
    let scene = Scene::new(
        Tensor::zeros(&[3, 1024, 2048]),
        vec![
            BBox::real(1012, 462, 24, 100)?, // too narrow
            BBox::real(1000, 450, 48, 124)?, // centred at row 512, column 1024
            BBox::real(2, 600, 30, 90)?,     // against the left edge
            BBox::real(700, 300, 40, 60)?,   // too short
        ],
        "city.png",
    )?;
    let kept = filter_boxes(&scene.boxes, 70, 25);
    println!("{} of {} boxes pass the 70x25 filter", kept.len(), scene.boxes.len());
    for b in &kept {
        let crop = crop_patch(&scene, b, 256)?;
        println!(
            "box at ({}, {}) -> patch offset top {} left {}, box in patch ({}, {})",
            b.x, b.y, crop.offset.top, crop.offset.left, crop.box_in_patch.x, crop.box_in_patch.y
        );
        let noisy = mask_with_noise(&crop.image, &crop.box_in_patch, &mut ChaCha8Rng::seed_from_u64(1))?;
        let changed = noisy.data().iter().zip(crop.image.data()).filter(|(a, b)| a != b).count();
        println!("  noise replaced {changed} of {} values (box area x 3 = {})", noisy.len(), 3 * b.area());
    }
    let tall = BBox::real(100, 100, 40, 300)?;
    println!("300px box: {}", crop_patch(&scene, &tall, 256).unwrap_err());
    Ok(())
}
