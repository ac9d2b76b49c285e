use serde::{Deserialize, Serialize};

use crate::{Error, Grid, Result};

/// Highest diffraction order (in magnitude) that kernels may be placed on.
pub const MAX_ORDER: i32 = 3;

/// Physical constants of the 4f bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    pub wavelength_m: f64,
    pub focal_length_m: f64,
    pub dmd_pitch_m: f64,
    pub dmd_cols: usize,
    pub dmd_rows: usize,
    /// DMD mirrors per image pixel along each axis.
    pub superpixel: usize,
    pub incidence_angle_deg: f64,
    pub mirror_tilt_deg: f64,
    /// Integer horizontal stretch compensating the tilted-mirror compression.
    pub horizontal_expand: usize,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            wavelength_m: 450e-9,
            focal_length_m: 0.100,
            dmd_pitch_m: 7.6e-6,
            dmd_cols: 1920,
            dmd_rows: 1080,
            superpixel: 3,
            incidence_angle_deg: 57.0,
            mirror_tilt_deg: 12.0,
            horizontal_expand: 2,
        }
    }
}

impl OpticalConfig {
    /// Same bench with the short 30 mm lenses.
    pub fn short_focal() -> Self {
        OpticalConfig {
            focal_length_m: 0.030,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength_m", self.wavelength_m),
            ("focal_length_m", self.focal_length_m),
            ("dmd_pitch_m", self.dmd_pitch_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dmd_cols == 0 || self.dmd_rows == 0 {
            return Err(Error::InvalidConfig("DMD resolution must be at least 1x1".into()));
        }
        if self.superpixel == 0 || self.horizontal_expand == 0 {
            return Err(Error::InvalidConfig(
                "superpixel and horizontal_expand must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Width of the Fourier window in DMD pixels: `round(λ·f / Δ²)`.
pub fn fourier_plane_px(config: &OpticalConfig) -> Result<usize> {
    config.validate()?;
    let px = config.wavelength_m * config.focal_length_m / (config.dmd_pitch_m * config.dmd_pitch_m);
    Ok(px.round() as usize)
}

/// First-order diffraction angle of the DMD grating, small-angle form `λ/Δ` (rad).
pub fn diffraction_angle(config: &OpticalConfig) -> Result<f64> {
    config.validate()?;
    Ok(config.wavelength_m / config.dmd_pitch_m)
}

/// Horizontal offset in DMD pixels of the centre of diffraction order `order`
/// from the zeroth order.
///
/// The orders `0..=order` (or `order..=0`) must all fit side by side on DMD#2,
/// each taking one Fourier window.
pub fn order_offset_px(order: i32, config: &OpticalConfig) -> Result<i64> {
    let window = fourier_plane_px(config)?;
    if order.abs() > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let needed = (order.unsigned_abs() as usize + 1) * window;
    if needed > config.dmd_cols || window > config.dmd_rows {
        return Err(Error::KernelDoesNotFit {
            order,
            needed_px: needed,
            available_px: config.dmd_cols,
        });
    }
    Ok(order as i64 * window as i64)
}

/// Maps a binary image onto DMD mirrors: each pixel becomes a
/// `superpixel × superpixel` block, then columns are replicated
/// `horizontal_expand` times.
pub fn geometry_pretransform(image: &Grid<u8>, config: &OpticalConfig) -> Result<Grid<u8>> {
    config.validate()?;
    if image.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("DMD input must be binary (0/1)".into()));
    }
    let sp = config.superpixel;
    let sx = sp * config.horizontal_expand;
    let out_rows = image.rows() * sp;
    let out_cols = image.cols() * sx;
    if out_rows > config.dmd_rows || out_cols > config.dmd_cols {
        return Err(Error::FrameOverflow {
            needed: (out_rows, out_cols),
            frame: (config.dmd_rows, config.dmd_cols),
        });
    }
    Ok(Grid::from_fn(out_rows, out_cols, |r, c| image[(r / sp, c / sx)]))
}
