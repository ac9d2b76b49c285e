use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Grid, Result};

/// Fourier kernels in the full-size model.
pub const KERNEL_COUNT: usize = 16;
/// Width of the hidden fully connected layer.
pub const HIDDEN_UNITS: usize = 256;
/// Straight-through gradient passes where `|w| <= STE_CLIP`.
pub const STE_CLIP: f64 = 1.0;
/// Side of the zeroed block at the centre of high-pass kernels.
pub const HIGHPASS_SIDE: usize = 3;

/// Fully connected layer, weights stored `[output][input]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±sqrt(6 / fan)`, zero bias.
    fn uniform(inputs: usize, outputs: usize, fan: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / fan as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-a..a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.inputs);
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()),
        );
    }

    /// Accumulates parameter gradients into `grad` and writes `dL/dx` to `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut Vec<f64>>) {
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            if g != 0.0 {
                let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
                for (w, v) in row.iter_mut().zip(x) {
                    *w += g * v;
                }
            }
        }
        if let Some(dx) = dx {
            dx.clear();
            dx.resize(self.inputs, 0.0);
            for (row, &g) in self.weights.chunks_exact(self.inputs).zip(dy) {
                if g != 0.0 {
                    for (d, w) in dx.iter_mut().zip(row) {
                        *d += g * w;
                    }
                }
            }
        }
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }
}

/// Sizes that fix the parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Side of the square simulation grid.
    pub grid: usize,
    /// Native image size; features are cropped to it before pooling.
    pub image: (usize, usize),
    pub kernels: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn mnist(grid: usize) -> Self {
        Architecture {
            grid,
            image: (28, 28),
            kernels: KERNEL_COUNT,
            hidden: HIDDEN_UNITS,
            classes: 10,
        }
    }

    pub fn cifar10(grid: usize) -> Self {
        Architecture {
            image: (32, 32),
            ..Self::mnist(grid)
        }
    }

    pub fn pooled(&self) -> (usize, usize) {
        (self.image.0 / 2, self.image.1 / 2)
    }

    /// Length of the flattened max-pooled feature vector.
    pub fn feature_len(&self) -> usize {
        let (r, c) = self.pooled();
        self.kernels * r * c
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = self.image;
        if r < 2 || c < 2 || r > self.grid || c > self.grid {
            return Err(Error::InvalidConfig(format!(
                "image {r}x{c} must be at least 2x2 and fit the {0}x{0} grid",
                self.grid
            )));
        }
        if self.kernels == 0 || self.hidden == 0 || self.classes < 2 {
            return Err(Error::InvalidConfig(
                "need at least one kernel, one hidden unit and two classes".into(),
            ));
        }
        Ok(())
    }
}

/// All trainable state of the hybrid classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    /// Real-valued master weights, one `grid × grid` map per kernel, DC at `(grid/2, grid/2)`.
    pub kernels: Vec<Grid<f64>>,
    pub fc1: Dense,
    pub fc2: Dense,
    pub highpass: bool,
}

impl ModelParams {
    pub fn init(arch: Architecture, highpass: bool, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = arch.grid;
        let kernels = (0..arch.kernels)
            .map(|_| Grid::from_fn(g, g, |_, _| rng.gen_range(-0.5..0.5)))
            .collect();
        let features = arch.feature_len();
        let fc1 = Dense::uniform(features, arch.hidden, features, &mut rng);
        let fc2 = Dense::uniform(arch.hidden, arch.classes, arch.hidden + arch.classes, &mut rng);
        let mut p = ModelParams {
            arch,
            kernels,
            fc1,
            fc2,
            highpass,
        };
        p.enforce_highpass();
        Ok(p)
    }

    /// Resets the masked centre bins of every master kernel to zero.
    pub fn enforce_highpass(&mut self) {
        if !self.highpass {
            return;
        }
        let g = self.arch.grid;
        for k in &mut self.kernels {
            for (r, c) in highpass_bins(g) {
                k[(r, c)] = 0.0;
            }
        }
    }

    /// DMD pattern of kernel `k`.
    pub fn binary_kernel(&self, k: usize) -> Grid<u8> {
        let mut b = binarize_ste(&self.kernels[k]);
        if self.highpass {
            for rc in highpass_bins(self.arch.grid) {
                b[rc] = 0;
            }
        }
        b
    }

    pub fn check_consistent(&self) -> Result<()> {
        self.arch.validate()?;
        let g = self.arch.grid;
        if self.kernels.len() != self.arch.kernels || self.kernels.iter().any(|k| k.shape() != (g, g)) {
            return Err(Error::InvalidArgument(
                "kernel tensors do not match the architecture".into(),
            ));
        }
        let f = self.arch.feature_len();
        if (self.fc1.inputs, self.fc1.outputs) != (f, self.arch.hidden)
            || (self.fc2.inputs, self.fc2.outputs) != (self.arch.hidden, self.arch.classes)
        {
            return Err(Error::DimensionMismatch {
                expected: (f, self.arch.hidden),
                found: (self.fc1.inputs, self.fc1.outputs),
            });
        }
        Ok(())
    }
}

/// Centre `3 × 3` block of a `g × g` centred spectrum.
pub fn highpass_bins(g: usize) -> impl Iterator<Item = (usize, usize)> {
    let h = HIGHPASS_SIDE / 2;
    let c = g / 2;
    let lo = c.saturating_sub(h);
    let hi = (c + h).min(g - 1);
    (lo..=hi).flat_map(move |r| (lo..=hi).map(move |col| (r, col)))
}

/// `w > 0 → 1`, otherwise 0.
pub fn binarize_ste(w: &Grid<f64>) -> Grid<u8> {
    w.map(|&v| (v > 0.0) as u8)
}

/// Straight-through backward: pass `upstream` where `|w| <= STE_CLIP`.
pub fn ste_backward(w: &Grid<f64>, upstream: &Grid<f64>) -> Result<Grid<f64>> {
    upstream.ensure_shape(w.shape())?;
    Ok(Grid::from_fn(w.rows(), w.cols(), |r, c| {
        if w[(r, c)].abs() <= STE_CLIP {
            upstream[(r, c)]
        } else {
            0.0
        }
    }))
}

/// Differentiable stand-in for the binarization whose derivative is the STE
/// contract: `clamp(w, -1, 1)`.
pub(crate) fn ste_surrogate(v: f64) -> f64 {
    v.clamp(-STE_CLIP, STE_CLIP)
}
