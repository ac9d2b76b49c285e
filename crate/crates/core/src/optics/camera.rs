use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Grid, Result};

/// Detector noise: multiplicative Gaussian gain error followed by an additive
/// Gaussian dark floor, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub multiplicative_sigma: f64,
    /// Standard deviation of the additive dark/read noise.
    pub dark_floor: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn multiplicative(sigma: f64) -> Self {
        NoiseSpec {
            multiplicative_sigma: sigma,
            dark_floor: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.multiplicative_sigma == 0.0 && self.dark_floor == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.multiplicative_sigma >= 0.0 && self.multiplicative_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be non-negative, got {}",
                self.multiplicative_sigma
            )));
        }
        if !(self.dark_floor >= 0.0 && self.dark_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dark floor must be non-negative, got {}",
                self.dark_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    /// Camera pixel = mean over a `bin × bin` block of simulation pixels.
    pub bin: usize,
    pub noise: NoiseSpec,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            bin: 1,
            noise: NoiseSpec::none(),
        }
    }
}

/// Independent, reproducible noise stream `stream` under `seed`.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn camera_capture<R: Rng + ?Sized>(intensity: &Grid<f64>, spec: &CameraSpec, rng: &mut R) -> Result<Grid<f64>> {
    spec.noise.validate()?;
    if spec.bin == 0 {
        return Err(Error::InvalidArgument("camera bin must be at least 1".into()));
    }
    if intensity.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "intensity must be finite and non-negative".into(),
        ));
    }
    let b = spec.bin;
    if intensity.rows() % b != 0 || intensity.cols() % b != 0 {
        return Err(Error::InvalidArgument(format!(
            "{}x{} grid is not divisible into {b}x{b} bins",
            intensity.rows(),
            intensity.cols()
        )));
    }
    let binned = if b == 1 {
        intensity.clone()
    } else {
        let norm = 1.0 / (b * b) as f64;
        Grid::from_fn(intensity.rows() / b, intensity.cols() / b, |r, c| {
            let mut s = 0.0;
            for y in r * b..(r + 1) * b {
                for x in c * b..(c + 1) * b {
                    s += intensity[(y, x)];
                }
            }
            s * norm
        })
    };
    if spec.noise.is_none() {
        return Ok(binned);
    }
    let NoiseSpec {
        multiplicative_sigma: sigma,
        dark_floor,
    } = spec.noise;
    Ok(binned.map(|&v| {
        let gain: f64 = rng.sample(StandardNormal);
        let dark: f64 = rng.sample(StandardNormal);
        (v * (1.0 + sigma * gain) + dark_floor * dark).max(0.0)
    }))
}
