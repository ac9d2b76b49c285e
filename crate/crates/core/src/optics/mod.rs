//! Coherent 4f optical path.
//!
//! DMD#1 amplitude-modulates a coherent beam with a binary frame, lens L1
//! Fourier-transforms it onto DMD#2 where a binary Fourier kernel is applied,
//! lens L2 transforms again and the camera records intensity. The pixel grid
//! of DMD#1 also diffracts, placing copies of the spectrum one Fourier window
//! apart; [`multi_kernel_forward`] uses those copies to run several kernels
//! in one exposure.

mod camera;
mod config;
pub mod export;
mod field;
mod fourf;

pub use camera::{camera_capture, noise_rng, CameraSpec, NoiseSpec};
pub use config::{
    diffraction_angle, fourier_plane_px, geometry_pretransform, order_offset_px, OpticalConfig, MAX_ORDER,
};
pub use field::{ApertureMask, FieldPlane, Rect, WindowLayout};
pub use fourf::{forward_4f, forward_4f_oriented, multi_kernel_forward, OrderWeights, OrderedKernel, Orientation};
