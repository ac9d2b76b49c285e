//! Bit-plane quantization of MNIST digits (or a synthetic gradient when the
//! dataset is not present) scored by SSIM.
//!
//! `DCNN_DATA_DIR` points at a directory with an `mnist/` subdirectory.
use std::path::PathBuf;

use dcnn::datapipe::{binarize_gray, load_mnist, quantize, recombine, ssim, threshold_to_image, Image8};
use dcnn::Grid;

fn main() -> dcnn::Result<()> {
    let dir = PathBuf::from(std::env::var("DCNN_DATA_DIR").unwrap_or_else(|_| "/root/data".into())).join("mnist");
    let images: Vec<Grid<u8>> = match load_mnist(&dir) {
        Ok(split) => split
            .test
            .images
            .iter()
            .take(500)
            .map(|im| im.gray().cloned())
            .collect::<dcnn::Result<_>>()?,
        Err(e) => {
            println!("({e}; using synthetic images)");
            (0..20)
                .map(|s| Grid::from_fn(28, 28, |r, c| ((r * 9 + c * 5 + s * 11) % 256) as u8))
                .collect()
        }
    };
    for frac in [0.3, 0.5, 0.8] {
        let mut total = 0.0;
        for g in &images {
            total += ssim(g, &threshold_to_image(&binarize_gray(g, frac)?))?;
        }
        println!(
            "single threshold at {frac:.1} of max: mean SSIM {:.4}",
            total / images.len() as f64
        );
    }
    for levels in [1, 3, 7, 15] {
        let mut total = 0.0;
        for g in &images {
            let im = Image8::from_planes(vec![g.clone()])?;
            let stack = quantize(&im, levels)?;
            total += ssim(g, &recombine(&stack).planes()[0])?;
        }
        println!("{levels:2} thresholds: mean SSIM {:.4}", total / images.len() as f64);
    }
    Ok(())
}
