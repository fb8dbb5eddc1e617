#![allow(dead_code)]

use std::path::Path;

use council_core::mnist::{encode_idx_images, encode_idx_labels, GrayImage};

/// A digit-dependent bar plus deterministic speckle, so small networks can
/// separate the classes after an epoch or two.
pub fn synthetic_image(label: u8, k: usize) -> GrayImage {
    let mut img = GrayImage::black();
    let row = 3 + 2 * label as usize;
    for col in 4..24 {
        img.set(row, col, 230);
        img.set(row + 1, col, 180);
    }
    let mut state = (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ label as u64;
    for _ in 0..12 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let p = (state >> 33) as usize % 784;
        img.set(p / 28, p % 28, ((state >> 20) & 0x7F) as u8);
    }
    img
}

fn split(per_class: usize, offset: usize) -> (Vec<GrayImage>, Vec<u8>) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for k in 0..per_class {
        for d in 0..10u8 {
            images.push(synthetic_image(d, offset + k));
            labels.push(d);
        }
    }
    (images, labels)
}

/// Writes the four IDX files under their standard names.
pub fn write_dataset(dir: &Path, train_per_class: usize, test_per_class: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let (tr_i, tr_l) = split(train_per_class, 0);
    let (te_i, te_l) = split(test_per_class, 100_000);
    std::fs::write(dir.join("train-images-idx3-ubyte"), encode_idx_images(&tr_i)).unwrap();
    std::fs::write(dir.join("train-labels-idx1-ubyte"), encode_idx_labels(&tr_l)).unwrap();
    std::fs::write(dir.join("t10k-images-idx3-ubyte"), encode_idx_images(&te_i)).unwrap();
    std::fs::write(dir.join("t10k-labels-idx1-ubyte"), encode_idx_labels(&te_l)).unwrap();
}
