//! Forward and backward passes of the whole classifier for one sample.

use num_complex::Complex64;

use super::conv::{
    capture, conv_digital, conv_digital_backward, conv_optical, from_transposed, Acquisition, ConvCache, ConvMode,
    KernelBank, KernelTransfer, SpectralEngine, Window,
};
use super::params::{highpass_bins, Dense, ModelParams, STE_CLIP};
use crate::{Error, Grid, Result};

/// Divides all maps of one image by their common maximum.
/// Returns `(max, index of max)`, or `None` for an all-dark image.
pub(crate) fn normalize(maps: &mut [f64]) -> Option<(f64, usize)> {
    let (idx, &max) = maps.iter().enumerate().fold(
        (0, &f64::NEG_INFINITY),
        |best, cur| if cur.1 > best.1 { cur } else { best },
    );
    if !(max > 0.0) {
        return None;
    }
    let inv = 1.0 / max;
    maps.iter_mut().for_each(|v| *v *= inv);
    Some((max, idx))
}

/// 2×2 stride-2 max-pool of `kernels` maps of `rows × cols`; odd edges are dropped.
pub(crate) fn maxpool(
    maps: &[f64],
    kernels: usize,
    rows: usize,
    cols: usize,
    out: &mut Vec<f64>,
    arg: &mut Vec<usize>,
) {
    let (pr, pc) = (rows / 2, cols / 2);
    out.clear();
    arg.clear();
    for k in 0..kernels {
        let base = k * rows * cols;
        for i in 0..pr {
            for j in 0..pc {
                let mut best = base + 2 * i * cols + 2 * j;
                for idx in [best + 1, best + cols, best + cols + 1] {
                    if maps[idx] > maps[best] {
                        best = idx;
                    }
                }
                out.push(maps[best]);
                arg.push(best);
            }
        }
    }
}

/// Mean-free softmax cross-entropy; writes `dL/dlogits` into `grad`.
pub(crate) fn softmax_xent(logits: &[f64], label: usize, grad: &mut Vec<f64>) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    grad.clear();
    grad.extend(logits.iter().map(|l| (l - m).exp() / z));
    grad[label] -= 1.0;
    z.ln() + m - logits[label]
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        .0
}

/// Activations of the fully connected head.
#[derive(Default)]
pub(crate) struct HeadState {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl HeadState {
    pub fn forward(&mut self, params: &ModelParams, pooled: &[f64]) {
        params.fc1.forward(pooled, &mut self.hidden_pre);
        self.hidden.clear();
        self.hidden.extend(self.hidden_pre.iter().map(|&v| v.max(0.0)));
        params.fc2.forward(&self.hidden, &mut self.logits);
    }
}

/// Gradient accumulators, kernel part in transposed DFT layout.
pub(crate) struct GradAcc {
    pub kernels: Vec<Vec<f64>>,
    pub fc1: Dense,
    pub fc2: Dense,
}

impl GradAcc {
    pub fn new(params: &ModelParams, with_kernels: bool) -> Self {
        let g = params.arch.grid;
        GradAcc {
            kernels: if with_kernels {
                vec![vec![0.0; g * g]; params.arch.kernels]
            } else {
                Vec::new()
            },
            fc1: Dense::zeros(params.fc1.inputs, params.fc1.outputs),
            fc2: Dense::zeros(params.fc2.inputs, params.fc2.outputs),
        }
    }

    pub fn reset(&mut self) {
        for k in &mut self.kernels {
            k.fill(0.0);
        }
        for d in [&mut self.fc1, &mut self.fc2] {
            d.weights.fill(0.0);
            d.bias.fill(0.0);
        }
    }

    /// Kernel gradient on the masters, centred layout, after the STE and mask.
    pub fn kernel_grid(&self, params: &ModelParams, k: usize, scale: f64) -> Grid<f64> {
        let g = params.arch.grid;
        let w = &params.kernels[k];
        let mut out = from_transposed(&self.kernels[k], g);
        for (o, &wv) in out.as_mut_slice().iter_mut().zip(w.iter()) {
            *o = if wv.abs() <= STE_CLIP { *o * scale } else { 0.0 };
        }
        if params.highpass {
            for rc in highpass_bins(g) {
                out[rc] = 0.0;
            }
        }
        out
    }
}

/// Per-thread forward/backward machinery for one parameter snapshot.
pub(crate) struct Pass {
    engine: SpectralEngine,
    bank: KernelBank,
    cache: ConvCache,
    planes: Vec<Grid<f64>>,
    pub maps: Vec<f64>,
    norm: Option<(f64, usize)>,
    pub pooled: Vec<f64>,
    arg: Vec<usize>,
    pub head: HeadState,
    d_logits: Vec<f64>,
    d_hidden: Vec<f64>,
    d_pooled: Vec<f64>,
    d_maps: Vec<f64>,
    q: Vec<Complex64>,
    q_spec: Vec<Complex64>,
}

impl Pass {
    pub fn new(params: &ModelParams, transfer: KernelTransfer) -> Self {
        let win = Window::centered(params.arch.grid, params.arch.image);
        Pass {
            engine: SpectralEngine::new(params.arch.grid, win),
            bank: KernelBank::new(params, transfer),
            cache: ConvCache::default(),
            planes: Vec::new(),
            maps: Vec::new(),
            norm: None,
            pooled: Vec::new(),
            arg: Vec::new(),
            head: HeadState::default(),
            d_logits: Vec::new(),
            d_hidden: Vec::new(),
            d_pooled: Vec::new(),
            d_maps: Vec::new(),
            q: Vec::new(),
            q_spec: Vec::new(),
        }
    }

    /// New kernel values after an optimizer step.
    pub fn refresh(&mut self, params: &ModelParams, transfer: KernelTransfer) {
        self.bank = KernelBank::new(params, transfer);
    }

    /// Raw window intensities into `self.maps`.
    pub fn conv(&mut self, params: &ModelParams, sample: &[Grid<u8>], acq: &Acquisition) -> Result<()> {
        let (r, c) = params.arch.image;
        for p in sample {
            if p.shape() != (r, c) {
                return Err(Error::DimensionMismatch {
                    expected: (r, c),
                    found: p.shape(),
                });
            }
        }
        match acq.mode {
            ConvMode::Digital => {
                self.planes.clear();
                self.planes.extend(sample.iter().map(|p| p.map(|&v| v as f64)));
                conv_digital(
                    &mut self.engine,
                    &self.bank,
                    &self.planes,
                    &mut self.cache,
                    &mut self.maps,
                )
            }
            ConvMode::Optical => {
                self.maps = conv_optical(params, sample, self.engine.window(), &acq.optics)?;
                Ok(())
            }
        }
    }

    /// Camera, normalization and pooling of `self.maps`.
    pub fn features(&mut self, params: &ModelParams, acq: &Acquisition, stream: u64) -> Result<()> {
        let win = self.engine.window();
        capture(&mut self.maps, params.arch.kernels, win, acq, stream)?;
        if self.maps.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite convolution output".into()));
        }
        self.norm = normalize(&mut self.maps);
        maxpool(
            &self.maps,
            params.arch.kernels,
            win.rows,
            win.cols,
            &mut self.pooled,
            &mut self.arg,
        );
        Ok(())
    }

    /// Forward to logits.
    pub fn logits(
        &mut self,
        params: &ModelParams,
        sample: &[Grid<u8>],
        acq: &Acquisition,
        stream: u64,
    ) -> Result<&[f64]> {
        self.conv(params, sample, acq)?;
        self.features(params, acq, stream)?;
        self.head.forward(params, &self.pooled);
        Ok(&self.head.logits)
    }

    /// Noise-free digital forward and backward for one labelled sample.
    /// Returns the loss and whether the prediction was correct.
    pub fn accumulate(
        &mut self,
        params: &ModelParams,
        sample: &[Grid<u8>],
        label: usize,
        grads: &mut GradAcc,
    ) -> Result<(f64, bool)> {
        let acq = Acquisition::digital();
        self.logits(params, sample, &acq, 0)?;
        let correct = argmax(&self.head.logits) == label;
        let loss = softmax_xent(&self.head.logits, label, &mut self.d_logits);
        self.backward_head(params, grads, !grads.kernels.is_empty());
        if grads.kernels.is_empty() {
            return Ok((loss, correct));
        }

        let win = self.engine.window();
        self.d_maps.clear();
        self.d_maps.resize(self.maps.len(), 0.0);
        for (&i, &d) in self.arg.iter().zip(&self.d_pooled) {
            self.d_maps[i] += d;
        }
        if let Some((max, at)) = self.norm {
            // maps already hold y / max
            let dot: f64 = self.d_maps.iter().zip(&self.maps).map(|(d, f)| d * f).sum();
            let inv = 1.0 / max;
            self.d_maps.iter_mut().for_each(|d| *d *= inv);
            self.d_maps[at] -= dot * inv;
        } else {
            self.d_maps.fill(0.0);
        }
        debug_assert_eq!(self.d_maps.len(), params.arch.kernels * win.len());
        conv_digital_backward(
            &mut self.engine,
            &self.cache,
            &self.d_maps,
            &mut grads.kernels,
            &mut self.q,
            &mut self.q_spec,
        );
        Ok((loss, correct))
    }

    fn backward_head(&mut self, params: &ModelParams, grads: &mut GradAcc, need_input_grad: bool) {
        params.fc2.backward(
            &self.head.hidden,
            &self.d_logits,
            &mut grads.fc2,
            Some(&mut self.d_hidden),
        );
        for (d, &pre) in self.d_hidden.iter_mut().zip(&self.head.hidden_pre) {
            if pre <= 0.0 {
                *d = 0.0;
            }
        }
        let dx = if need_input_grad {
            Some(&mut self.d_pooled)
        } else {
            None
        };
        params.fc1.backward(&self.pooled, &self.d_hidden, &mut grads.fc1, dx);
    }
}

/// Head-only forward/backward on a precomputed pooled feature vector.
pub(crate) fn head_accumulate(
    params: &ModelParams,
    pooled: &[f64],
    label: usize,
    head: &mut HeadState,
    grads: &mut GradAcc,
    scratch: &mut (Vec<f64>, Vec<f64>),
) -> (f64, bool) {
    head.forward(params, pooled);
    let correct = argmax(&head.logits) == label;
    let (d_logits, d_hidden) = scratch;
    let loss = softmax_xent(&head.logits, label, d_logits);
    params
        .fc2
        .backward(&head.hidden, d_logits, &mut grads.fc2, Some(d_hidden));
    for (d, &pre) in d_hidden.iter_mut().zip(&head.hidden_pre) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    params.fc1.backward(pooled, d_hidden, &mut grads.fc1, None);
    (loss, correct)
}
