//! Data side of the accelerator: dataset loading, conversion of 8-bit images
//! into binary DMD bit-planes, SSIM scoring of the conversion, and packing of
//! many images into one DMD frame.

mod dataset;
pub mod export;
mod layout;
mod quantize;
mod ssim;

pub use dataset::{
    load_cifar10, load_cifar10_batch, load_idx_images, load_idx_labels, load_mnist, load_quickdraw, Dataset,
    DatasetKind, Image8, Split,
};
pub use layout::{make_layout, tile, untile, LayoutSpec, TileLayout, MIN_TILE_SEPARATION_PX};
pub use quantize::{
    binarize_dataset, binarize_gray, binarize_gray_with, quantize, quantize_rgb, recombine, threshold_to_image,
    BitPlaneStack, ThresholdReference,
};
pub use ssim::{mean_ssim, ssim, ssim_image, SSIM_WINDOW};
