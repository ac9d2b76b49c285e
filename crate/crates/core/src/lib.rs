//! Desk-scale simulator for a diffraction-based Fourier-optical CNN accelerator.
//!
//! The crate is split along the physical pipeline:
//!
//! - [`optics`]: coherent 4f path (DMD amplitude modulation, lens transforms,
//!   Fourier-plane kernels, diffraction-order kernel parallelism, aperture,
//!   camera detection).
//! - [`datapipe`]: dataset loaders, bit-plane quantization, SSIM, DMD tiling.
//! - [`network`]: Fourier-kernel classifier with straight-through binarization
//!   and the two-stage (simulate, then calibrate the head) training flow.
//! - [`perfmodel`]: analytical OPS/W and latency model with generation presets.
//! - [`commands`]: the batch commands behind the `dcnn` binary.

pub mod commands;
pub mod datapipe;
mod error;
pub mod fft;
mod grid;
pub mod network;
pub mod optics;
pub mod perfmodel;

pub use error::{Error, ErrorKind, Result};
pub use grid::Grid;
