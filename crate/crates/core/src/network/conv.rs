//! The Fourier convolution layer.
//!
//! The digital path keeps spectra in a transposed DFT layout (`[col][row]`)
//! so that both column passes run on contiguous lines, and it only transforms
//! the rows that carry data: the input occupies a small window of the grid and
//! only that window of the output is ever read.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::params::{highpass_bins, ste_surrogate, ModelParams};
use crate::fft::{centered_to_dft, dft_to_centered};
use crate::optics::{
    camera_capture, multi_kernel_forward, noise_rng, ApertureMask, CameraSpec, FieldPlane, OpticalConfig, OrderWeights,
    OrderedKernel, WindowLayout,
};
use crate::{Error, Grid, Result};

/// How the convolution layer is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    /// FFT-based equivalent of the 4f system.
    #[default]
    Digital,
    /// Full optical model: two kernels per pass on the 0th and 1st
    /// diffraction orders behind an ideal aperture.
    Optical,
}

/// Everything between the kernels and the fully connected head.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Acquisition {
    pub mode: ConvMode,
    pub camera: CameraSpec,
    /// Seeds the camera noise; image `n` uses stream `n`.
    pub seed: u64,
    pub optics: OpticalConfig,
}

impl Acquisition {
    pub fn digital() -> Self {
        Self::default()
    }

    pub fn noisy(camera: CameraSpec, seed: u64) -> Self {
        Acquisition {
            camera,
            seed,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.camera.noise.validate()?;
        if self.camera.bin != 1 {
            return Err(Error::InvalidConfig(
                "the classifier reads the camera at simulation resolution (bin = 1)".into(),
            ));
        }
        Ok(())
    }
}

/// What multiplies the spectrum in the Fourier plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelTransfer {
    /// Binarized masters, as displayed on the DMD.
    #[default]
    Binary,
    /// `clamp(w, -1, 1)`: the smooth function whose gradient the
    /// straight-through estimator reports. Used for gradient checks.
    Surrogate,
}

/// Rectangle of the grid holding the input, and read back at the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub r0: usize,
    pub c0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Window {
    pub fn centered(grid: usize, image: (usize, usize)) -> Self {
        Window {
            r0: (grid - image.0) / 2,
            c0: (grid - image.1) / 2,
            rows: image.0,
            cols: image.1,
        }
    }

    pub fn full(grid: usize) -> Self {
        Window {
            r0: 0,
            c0: 0,
            rows: grid,
            cols: grid,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Pruned unitary 2D transforms between a window and a transposed spectrum.
pub(crate) struct SpectralEngine {
    g: usize,
    win: Window,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
    band: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl SpectralEngine {
    pub fn new(g: usize, win: Window) -> Self {
        assert!(win.r0 + win.rows <= g && win.c0 + win.cols <= g);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(g);
        let inv = planner.plan_fft_inverse(g);
        let s = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        SpectralEngine {
            g,
            win,
            fwd,
            inv,
            scratch: vec![Complex64::default(); s],
            line: vec![Complex64::default(); g],
            band: vec![Complex64::default(); win.rows * g],
            tmp: vec![Complex64::default(); win.rows * g],
        }
    }

    pub fn grid(&self) -> usize {
        self.g
    }

    pub fn window(&self) -> Window {
        self.win
    }

    /// Unitary FT of window data (row-major `rows × cols`) into `out[col * g + row]`.
    pub fn forward(&mut self, input: &[Complex64], out: &mut [Complex64]) {
        let (g, w) = (self.g, self.win);
        debug_assert_eq!(input.len(), w.len());
        let s = 1.0 / g as f64;
        for i in 0..w.rows {
            let row = &mut self.band[i * g..(i + 1) * g];
            row.fill(Complex64::default());
            for (d, v) in row[w.c0..w.c0 + w.cols]
                .iter_mut()
                .zip(&input[i * w.cols..(i + 1) * w.cols])
            {
                *d = v * s;
            }
        }
        self.fwd.process_with_scratch(&mut self.band, &mut self.scratch);
        for u in 0..g {
            let col = &mut out[u * g..(u + 1) * g];
            col.fill(Complex64::default());
            for i in 0..w.rows {
                col[w.r0 + i] = self.band[i * g + u];
            }
        }
        self.fwd.process_with_scratch(&mut out[..g * g], &mut self.scratch);
    }

    /// Window of the unitary IFT of `spec ⊙ mask` (both transposed layout).
    pub fn inverse_masked(&mut self, spec: &[Complex64], mask: &[f64], out: &mut [Complex64]) {
        let (g, w) = (self.g, self.win);
        for u in 0..g {
            let m = &mask[u * g..(u + 1) * g];
            let dst = &mut self.tmp[u * w.rows..(u + 1) * w.rows];
            if m.iter().all(|&v| v == 0.0) {
                dst.fill(Complex64::default());
                continue;
            }
            for ((l, x), k) in self.line.iter_mut().zip(&spec[u * g..(u + 1) * g]).zip(m) {
                *l = x * k;
            }
            self.inv.process_with_scratch(&mut self.line, &mut self.scratch);
            dst.copy_from_slice(&self.line[w.r0..w.r0 + w.rows]);
        }
        for i in 0..w.rows {
            let row = &mut self.band[i * g..(i + 1) * g];
            for (u, v) in row.iter_mut().enumerate() {
                *v = self.tmp[u * w.rows + i];
            }
        }
        self.inv.process_with_scratch(&mut self.band, &mut self.scratch);
        let s = 1.0 / g as f64;
        for i in 0..w.rows {
            for j in 0..w.cols {
                out[i * w.cols + j] = self.band[i * g + w.c0 + j] * s;
            }
        }
    }
}

/// Fourier-plane multipliers of every kernel, transposed DFT layout.
pub(crate) struct KernelBank {
    pub masks: Vec<Vec<f64>>,
}

impl KernelBank {
    pub fn new(params: &ModelParams, transfer: KernelTransfer) -> Self {
        let g = params.arch.grid;
        let masks = params
            .kernels
            .iter()
            .map(|k| {
                let mut centred = match transfer {
                    KernelTransfer::Binary => k.map(|&v| (v > 0.0) as u8 as f64),
                    KernelTransfer::Surrogate => k.map(|&v| ste_surrogate(v)),
                };
                if params.highpass {
                    for rc in highpass_bins(g) {
                        centred[rc] = 0.0;
                    }
                }
                to_transposed(&centred)
            })
            .collect();
        KernelBank { masks }
    }
}

/// Centred `g × g` grid → transposed DFT-order buffer.
pub(crate) fn to_transposed(centred: &Grid<f64>) -> Vec<f64> {
    let g = centred.rows();
    let mut out = vec![0.0; g * g];
    for u in 0..g {
        for v in 0..g {
            out[u * g + v] = centred[(dft_to_centered(v, g), dft_to_centered(u, g))];
        }
    }
    out
}

/// Transposed DFT-order buffer → centred `g × g` grid.
pub(crate) fn from_transposed(t: &[f64], g: usize) -> Grid<f64> {
    Grid::from_fn(g, g, |r, c| t[centered_to_dft(c, g) * g + centered_to_dft(r, g)])
}

/// Intermediate values kept for the backward pass.
#[derive(Default)]
pub(crate) struct ConvCache {
    /// Spectrum of each input plane.
    pub spectra: Vec<Vec<Complex64>>,
    /// Output field of kernel `k` for plane `p` at index `k * planes + p`.
    pub fields: Vec<Vec<Complex64>>,
}

/// Raw intensities `Σ_planes |IFT(FT(x) ⊙ mask_k)|²` on the window, flattened
/// kernel-major.
pub(crate) fn conv_digital(
    engine: &mut SpectralEngine,
    bank: &KernelBank,
    planes: &[Grid<f64>],
    cache: &mut ConvCache,
    out: &mut Vec<f64>,
) -> Result<()> {
    let (g, w) = (engine.grid(), engine.window());
    let np = planes.len();
    cache.spectra.resize_with(np, Vec::new);
    for (p, plane) in planes.iter().enumerate() {
        plane.ensure_shape((w.rows, w.cols))?;
        let input: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let spec = &mut cache.spectra[p];
        spec.resize(g * g, Complex64::default());
        engine.forward(&input, spec);
    }
    let nk = bank.masks.len();
    cache.fields.resize_with(nk * np, Vec::new);
    out.clear();
    out.resize(nk * w.len(), 0.0);
    for (k, mask) in bank.masks.iter().enumerate() {
        let map = &mut out[k * w.len()..(k + 1) * w.len()];
        for p in 0..np {
            let field = &mut cache.fields[k * np + p];
            field.resize(w.len(), Complex64::default());
            engine.inverse_masked(&cache.spectra[p], mask, field);
            for (m, z) in map.iter_mut().zip(field.iter()) {
                *m += z.norm_sqr();
            }
        }
    }
    Ok(())
}

/// Adds `dL/dmask_k` (transposed layout) given `dL/dintensity` on the window.
pub(crate) fn conv_digital_backward(
    engine: &mut SpectralEngine,
    cache: &ConvCache,
    d_maps: &[f64],
    grads: &mut [Vec<f64>],
    q: &mut Vec<Complex64>,
    q_spec: &mut Vec<Complex64>,
) {
    let (g, w) = (engine.grid(), engine.window());
    let np = cache.spectra.len();
    q.resize(w.len(), Complex64::default());
    q_spec.resize(g * g, Complex64::default());
    for (k, grad) in grads.iter_mut().enumerate() {
        let dm = &d_maps[k * w.len()..(k + 1) * w.len()];
        if dm.iter().all(|&v| v == 0.0) {
            continue;
        }
        for p in 0..np {
            for ((qv, z), &d) in q.iter_mut().zip(&cache.fields[k * np + p]).zip(dm) {
                *qv = z * d;
            }
            engine.forward(q, q_spec);
            for ((gv, x), qs) in grad.iter_mut().zip(&cache.spectra[p]).zip(q_spec.iter()) {
                *gv += 2.0 * (x.re * qs.re + x.im * qs.im);
            }
        }
    }
}

/// The same intensities through the optics module, two kernels per pass.
pub(crate) fn conv_optical(
    params: &ModelParams,
    planes: &[Grid<u8>],
    win: Window,
    optics: &OpticalConfig,
) -> Result<Vec<f64>> {
    let g = params.arch.grid;
    let masks: Vec<Grid<f64>> = (0..params.arch.kernels)
        .map(|k| params.binary_kernel(k).map(|&v| v as f64))
        .collect();
    let mut out = vec![0.0; masks.len() * win.len()];
    for plane in planes {
        let mut frame = Grid::<u8>::zeros(g, g);
        plane.ensure_shape((win.rows, win.cols))?;
        frame.paste(plane, win.r0, win.c0);
        let field = FieldPlane::from_binary(&frame, optics.dmd_pitch_m)?;
        for (pass, pair) in masks.chunks(2).enumerate() {
            let kernels: Vec<OrderedKernel> = pair
                .iter()
                .enumerate()
                .map(|(o, m)| OrderedKernel {
                    order: o as i32,
                    mask: m.clone(),
                })
                .collect();
            let orders: Vec<i32> = kernels.iter().map(|k| k.order).collect();
            let layout = WindowLayout::spanning(&orders, g, g)?;
            let aperture = ApertureMask::ideal(&layout, &orders)?;
            let images = multi_kernel_forward(&field, &kernels, optics, Some(&aperture), &OrderWeights::uniform())?;
            for (o, img) in images.iter().enumerate() {
                let k = 2 * pass + o;
                let map = &mut out[k * win.len()..(k + 1) * win.len()];
                for i in 0..win.rows {
                    for j in 0..win.cols {
                        map[i * win.cols + j] += img[(win.r0 + i, win.c0 + j)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Applies camera noise to each kernel map of one image (or frame).
pub(crate) fn capture(maps: &mut [f64], kernels: usize, win: Window, acq: &Acquisition, stream: u64) -> Result<()> {
    if acq.camera.noise.is_none() {
        return Ok(());
    }
    let mut rng = noise_rng(acq.seed, stream);
    for k in 0..kernels {
        let m = &mut maps[k * win.len()..(k + 1) * win.len()];
        let grid = Grid::from_vec(win.rows, win.cols, m.to_vec())?;
        let shot = camera_capture(&grid, &acq.camera, &mut rng)?;
        m.copy_from_slice(shot.as_slice());
    }
    Ok(())
}
