//! Two-stage training, feature capture and evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{
    capture, conv_digital, conv_optical, Acquisition, ConvCache, ConvMode, KernelBank, KernelTransfer, SpectralEngine,
    Window,
};
use super::model::{argmax, head_accumulate, maxpool, normalize, GradAcc, HeadState, Pass};
use super::params::{Architecture, Dense, ModelParams, HIDDEN_UNITS, KERNEL_COUNT};
use crate::datapipe::{binarize_gray, quantize, tile, Dataset, TileLayout};
use crate::optics::NoiseSpec;
use crate::{Error, Grid, Result};

/// Hyperparameters of both training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub seed: u64,
    /// Side of the square simulation grid.
    pub grid: usize,
    pub kernels: usize,
    pub hidden: usize,
    pub highpass: bool,
    /// Camera noise while capturing stage-2 features.
    pub noise: NoiseSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_stage1: 0.01,
            lr_stage2: 0.005,
            momentum: 0.9,
            batch_size: 64,
            epochs_stage1: 10,
            epochs_stage2: 5,
            seed: 0,
            grid: 256,
            kernels: KERNEL_COUNT,
            hidden: HIDDEN_UNITS,
            highpass: true,
            noise: NoiseSpec::none(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = [self.lr_stage1, self.lr_stage2]
            .iter()
            .all(|r| r.is_finite() && *r > 0.0);
        if !rates_ok || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "learning rates must be positive and momentum in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs_stage1 == 0 || self.epochs_stage2 == 0 {
            return Err(Error::InvalidConfig("batch size and epochs must be at least 1".into()));
        }
        self.noise.validate()
    }

    pub fn architecture(&self, image: (usize, usize), classes: usize) -> Architecture {
        Architecture {
            grid: self.grid,
            image,
            kernels: self.kernels,
            hidden: self.hidden,
            classes,
        }
    }
}

/// Binary network inputs: one or more DMD planes per image.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySet {
    pub samples: Vec<Vec<Grid<u8>>>,
    pub labels: Vec<u8>,
    pub classes: usize,
    pub image: (usize, usize),
}

impl BinarySet {
    /// Grayscale images thresholded at `frac` of their own maximum.
    pub fn thresholded(ds: &Dataset, frac: f64) -> Result<Self> {
        let samples = ds
            .images
            .iter()
            .map(|im| Ok(vec![binarize_gray(im.gray()?, frac)?]))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(ds, samples)
    }

    /// `levels` full-scale thresholds per channel.
    pub fn quantized(ds: &Dataset, levels: usize) -> Result<Self> {
        let samples = ds
            .images
            .iter()
            .map(|im| Ok(quantize(im, levels)?.planes))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(ds, samples)
    }

    fn assemble(ds: &Dataset, samples: Vec<Vec<Grid<u8>>>) -> Result<Self> {
        let (r, c, _) = ds.kind.geometry();
        Ok(BinarySet {
            samples,
            labels: ds.labels.clone(),
            classes: ds.n_classes,
            image: (r, c),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        BinarySet {
            samples: self.samples[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            ..self.clone()
        }
    }

    /// Samples `range` of the set.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.len());
        let start = start.min(end);
        BinarySet {
            samples: self.samples[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            ..self.clone()
        }
    }
}

/// Pooled head inputs measured through the (simulated) hardware.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub classes: usize,
}

/// One line of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn push(&mut self, epoch: usize, split: &str, loss: f64, accuracy: f64) {
        self.rows.push(TraceRow {
            epoch,
            split: split.to_string(),
            loss,
            accuracy,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,loss,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.split, r.loss, r.accuracy);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn extend(&mut self, other: Trace) {
        self.rows.extend(other.rows);
    }
}

/// Top-1 accuracy with the confusion matrix `[true][predicted]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    fn from_predictions(predictions: Vec<usize>, labels: &[u8], classes: usize) -> Self {
        let mut confusion = vec![vec![0; classes]; classes];
        let mut correct = 0;
        for (&p, &l) in predictions.iter().zip(labels) {
            confusion[l as usize][p.min(classes - 1)] += 1;
            correct += (p == l as usize) as usize;
        }
        Evaluation {
            accuracy: correct as f64 / predictions.len().max(1) as f64,
            confusion,
            predictions,
        }
    }
}

/// Mean loss and summed parameter gradients of a labelled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `dL/dw` for each master kernel (centred layout).
    pub kernels: Vec<Grid<f64>>,
    pub fc1: Dense,
    pub fc2: Dense,
}

fn check_data(params: &ModelParams, data: &BinarySet) -> Result<()> {
    params.check_consistent()?;
    if data.image != params.arch.image {
        return Err(Error::DimensionMismatch {
            expected: params.arch.image,
            found: data.image,
        });
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l as usize >= params.arch.classes) {
        return Err(Error::InvalidArgument(format!("label {l} outside the model's classes")));
    }
    Ok(())
}

/// Noise-free digital loss (batch mean) and its gradients.
pub fn loss_and_gradient(params: &ModelParams, data: &BinarySet, transfer: KernelTransfer) -> Result<(f64, Gradients)> {
    check_data(params, data)?;
    let mut pass = Pass::new(params, transfer);
    let mut acc = GradAcc::new(params, true);
    let mut loss = 0.0;
    for (s, &l) in data.samples.iter().zip(&data.labels) {
        loss += pass.accumulate(params, s, l as usize, &mut acc)?.0;
    }
    let n = data.len().max(1) as f64;
    let scale = 1.0 / n;
    let kernels = (0..params.arch.kernels)
        .map(|k| acc.kernel_grid(params, k, scale))
        .collect();
    for d in [&mut acc.fc1, &mut acc.fc2] {
        d.weights.iter_mut().chain(d.bias.iter_mut()).for_each(|v| *v *= scale);
    }
    Ok((
        loss / n,
        Gradients {
            kernels,
            fc1: acc.fc1,
            fc2: acc.fc2,
        },
    ))
}

/// Batch-mean loss only.
pub fn batch_loss(params: &ModelParams, data: &BinarySet, transfer: KernelTransfer) -> Result<f64> {
    Ok(loss_and_gradient(params, data, transfer)?.0)
}

struct Momentum {
    kernels: Vec<Vec<f64>>,
    fc1: Vec<f64>,
    fc2: Vec<f64>,
}

impl Momentum {
    fn new(params: &ModelParams, with_kernels: bool) -> Self {
        let g = params.arch.grid;
        Momentum {
            kernels: if with_kernels {
                vec![vec![0.0; g * g]; params.arch.kernels]
            } else {
                Vec::new()
            },
            fc1: vec![0.0; params.fc1.weights.len() + params.fc1.bias.len()],
            fc2: vec![0.0; params.fc2.weights.len() + params.fc2.bias.len()],
        }
    }
}

fn sgd_dense(layer: &mut Dense, grad: &Dense, vel: &mut [f64], lr: f64, mu: f64, scale: f64) {
    for ((w, g), v) in layer.params_mut().zip(grad.params()).zip(vel.iter_mut()) {
        *v = mu * *v + g * scale;
        *w -= lr * *v;
    }
}

fn step(params: &mut ModelParams, acc: &GradAcc, mom: &mut Momentum, lr: f64, mu: f64, batch: usize) {
    let scale = 1.0 / batch as f64;
    for k in 0..mom.kernels.len() {
        let g = acc.kernel_grid(params, k, scale);
        for ((w, gv), v) in params.kernels[k]
            .as_mut_slice()
            .iter_mut()
            .zip(g.iter())
            .zip(mom.kernels[k].iter_mut())
        {
            *v = mu * *v + gv;
            *w -= lr * *v;
        }
    }
    sgd_dense(&mut params.fc1, &acc.fc1, &mut mom.fc1, lr, mu, scale);
    sgd_dense(&mut params.fc2, &acc.fc2, &mut mom.fc2, lr, mu, scale);
    params.enforce_highpass();
}

fn epoch_order(n: usize, seed: u64, stage: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn diverged(stage: &str, epoch: usize, batch: usize) -> Error {
    Error::Numerical(format!(
        "{stage} loss diverged (epoch {epoch}, batch {batch}); lower the learning rate"
    ))
}

/// Stage 1: kernels and head trained jointly in the noise-free digital model.
pub fn train_stage1(data: &BinarySet, config: &TrainConfig) -> Result<(ModelParams, Trace)> {
    config.validate()?;
    let arch = config.architecture(data.image, data.classes);
    let params = ModelParams::init(arch, config.highpass, config.seed)?;
    continue_stage1(params, data, config)
}

/// Stage 1 starting from existing parameters.
pub fn continue_stage1(
    mut params: ModelParams,
    data: &BinarySet,
    config: &TrainConfig,
) -> Result<(ModelParams, Trace)> {
    config.validate()?;
    check_data(&params, data)?;
    let mut pass = Pass::new(&params, KernelTransfer::Binary);
    let mut acc = GradAcc::new(&params, true);
    let mut mom = Momentum::new(&params, true);
    let mut trace = Trace::default();
    for epoch in 1..=config.epochs_stage1 {
        let order = epoch_order(data.len(), config.seed, 1, epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            acc.reset();
            for &i in batch {
                let (l, ok) = pass.accumulate(&params, &data.samples[i], data.labels[i] as usize, &mut acc)?;
                if !l.is_finite() {
                    return Err(diverged("stage-1", epoch, b));
                }
                loss_sum += l;
                correct += ok as usize;
            }
            step(
                &mut params,
                &acc,
                &mut mom,
                config.lr_stage1,
                config.momentum,
                batch.len(),
            );
            pass.refresh(&params, KernelTransfer::Binary);
            if b % 100 == 0 {
                log::debug!(
                    "stage 1 epoch {epoch} batch {b}: running loss {:.4}",
                    loss_sum / ((b + 1) * config.batch_size) as f64
                );
            }
        }
        let n = data.len().max(1) as f64;
        log::info!(
            "stage 1 epoch {epoch}: loss {:.4}, accuracy {:.4}",
            loss_sum / n,
            correct as f64 / n
        );
        trace.push(epoch, "train", loss_sum / n, correct as f64 / n);
    }
    Ok((params, trace))
}

/// Measures pooled head inputs for every sample. Sample `i` draws camera
/// noise from stream `i` of `acq.seed`.
pub fn capture_features(params: &ModelParams, data: &BinarySet, acq: &Acquisition) -> Result<CapturedSet> {
    capture_features_threaded(params, data, acq, 1)
}

/// [`capture_features`] split over `threads` workers. The result does not
/// depend on the thread count.
pub fn capture_features_threaded(
    params: &ModelParams,
    data: &BinarySet,
    acq: &Acquisition,
    threads: usize,
) -> Result<CapturedSet> {
    check_data(params, data)?;
    acq.validate()?;
    let features = par_map_ranges(data.len(), threads, |range| {
        let mut pass = Pass::new(params, KernelTransfer::Binary);
        range
            .map(|i| {
                pass.conv(params, &data.samples[i], acq)?;
                pass.features(params, acq, i as u64)?;
                Ok(pass.pooled.clone())
            })
            .collect()
    })?;
    Ok(CapturedSet {
        features,
        labels: data.labels.clone(),
        classes: data.classes,
    })
}

/// Runs `f` on contiguous index ranges covering `0..n` on up to `threads`
/// scoped threads and concatenates the results in index order.
fn par_map_ranges<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Result<Vec<T>> + Sync,
{
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return f(0..n);
    }
    let per = n.div_ceil(workers);
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || f(w * per..((w + 1) * per).min(n)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Stage 2: kernels frozen, head retrained on captured features.
pub fn finetune_stage2(
    params: &ModelParams,
    captured: &CapturedSet,
    config: &TrainConfig,
) -> Result<(ModelParams, Trace)> {
    config.validate()?;
    params.check_consistent()?;
    let want = params.arch.feature_len();
    if let Some(f) = captured.features.iter().find(|f| f.len() != want) {
        return Err(Error::DimensionMismatch {
            expected: (want, 1),
            found: (f.len(), 1),
        });
    }
    let mut params = params.clone();
    let mut head = HeadState::default();
    let mut acc = GradAcc::new(&params, false);
    let mut mom = Momentum::new(&params, false);
    let mut scratch = (Vec::new(), Vec::new());
    let mut trace = Trace::default();
    for epoch in 1..=config.epochs_stage2 {
        let order = epoch_order(captured.features.len(), config.seed, 2, epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            acc.reset();
            for &i in batch {
                let (l, ok) = head_accumulate(
                    &params,
                    &captured.features[i],
                    captured.labels[i] as usize,
                    &mut head,
                    &mut acc,
                    &mut scratch,
                );
                if !l.is_finite() {
                    return Err(diverged("stage-2", epoch, b));
                }
                loss_sum += l;
                correct += ok as usize;
            }
            step(
                &mut params,
                &acc,
                &mut mom,
                config.lr_stage2,
                config.momentum,
                batch.len(),
            );
        }
        let n = captured.features.len().max(1) as f64;
        log::info!(
            "stage 2 epoch {epoch}: loss {:.4}, accuracy {:.4}",
            loss_sum / n,
            correct as f64 / n
        );
        trace.push(epoch, "finetune", loss_sum / n, correct as f64 / n);
    }
    Ok((params, trace))
}

/// Single-image evaluation. Sample `i` draws camera noise from stream `i`.
pub fn evaluate(params: &ModelParams, data: &BinarySet, acq: &Acquisition) -> Result<Evaluation> {
    evaluate_threaded(params, data, acq, 1)
}

/// [`evaluate`] split over `threads` workers, with identical results.
pub fn evaluate_threaded(
    params: &ModelParams,
    data: &BinarySet,
    acq: &Acquisition,
    threads: usize,
) -> Result<Evaluation> {
    check_data(params, data)?;
    acq.validate()?;
    let preds = par_map_ranges(data.len(), threads, |range| {
        let mut pass = Pass::new(params, KernelTransfer::Binary);
        range
            .map(|i| Ok(argmax(pass.logits(params, &data.samples[i], acq, i as u64)?)))
            .collect()
    })?;
    Ok(Evaluation::from_predictions(preds, &data.labels, params.arch.classes))
}

/// Evaluation of the head on already captured features.
pub fn evaluate_captured(params: &ModelParams, captured: &CapturedSet) -> Result<Evaluation> {
    let mut head = HeadState::default();
    let mut preds = Vec::with_capacity(captured.features.len());
    for f in &captured.features {
        if f.len() != params.arch.feature_len() {
            return Err(Error::DimensionMismatch {
                expected: (params.arch.feature_len(), 1),
                found: (f.len(), 1),
            });
        }
        head.forward(params, f);
        preds.push(argmax(&head.logits));
    }
    Ok(Evaluation::from_predictions(
        preds,
        &captured.labels,
        params.arch.classes,
    ))
}

/// Mean cross-entropy of the head on captured features.
pub fn captured_loss(params: &ModelParams, captured: &CapturedSet) -> f64 {
    let mut head = HeadState::default();
    let mut g = Vec::new();
    let total: f64 = captured
        .features
        .iter()
        .zip(&captured.labels)
        .map(|(f, &l)| {
            head.forward(params, f);
            super::model::softmax_xent(&head.logits, l as usize, &mut g)
        })
        .sum();
    total / captured.features.len().max(1) as f64
}

/// Tiled evaluation: up to `layout.capacity()` images share one input frame
/// and one pass through the convolution layer; each image is then read back
/// from its own output window. Frame `f` draws camera noise from stream `f`.
pub fn evaluate_tiled(
    params: &ModelParams,
    data: &BinarySet,
    layout: &TileLayout,
    acq: &Acquisition,
) -> Result<Evaluation> {
    check_data(params, data)?;
    acq.validate()?;
    let g = params.arch.grid;
    if layout.frame != (g, g) || layout.scale != (1, 1) || layout.content != params.arch.image {
        return Err(Error::InvalidConfig(format!(
            "tiled evaluation needs a {g}x{g} frame of unscaled {:?} images",
            params.arch.image
        )));
    }
    let full = Window::full(g);
    let mut engine = SpectralEngine::new(g, full);
    let bank = KernelBank::new(params, KernelTransfer::Binary);
    let mut cache = ConvCache::default();
    let (r, c) = params.arch.image;
    let nk = params.arch.kernels;
    let img_win = Window {
        r0: 0,
        c0: 0,
        rows: r,
        cols: c,
    };
    let mut raw = Vec::new();
    let mut maps = vec![0.0; nk * r * c];
    let (mut pooled, mut arg) = (Vec::new(), Vec::new());
    let mut head = HeadState::default();
    let mut preds = Vec::with_capacity(data.len());
    let planes = data.samples.first().map_or(0, Vec::len);
    for (f, chunk) in data.samples.chunks(layout.capacity()).enumerate() {
        let frames = (0..planes)
            .map(|p| {
                let imgs: Vec<Grid<u8>> = chunk.iter().map(|s| s[p].clone()).collect();
                tile(&imgs, layout)
            })
            .collect::<Result<Vec<_>>>()?;
        match acq.mode {
            ConvMode::Digital => {
                let fp: Vec<Grid<f64>> = frames.iter().map(|fr| fr.map(|&v| v as f64)).collect();
                conv_digital(&mut engine, &bank, &fp, &mut cache, &mut raw)?;
            }
            ConvMode::Optical => raw = conv_optical(params, &frames, full, &acq.optics)?,
        }
        capture(&mut raw, nk, full, acq, f as u64)?;
        for n in 0..chunk.len() {
            let (r0, c0) = layout.content_origin(n);
            for k in 0..nk {
                for i in 0..r {
                    let src = k * g * g + (r0 + i) * g + c0;
                    maps[k * r * c + i * c..k * r * c + (i + 1) * c].copy_from_slice(&raw[src..src + c]);
                }
            }
            normalize(&mut maps);
            maxpool(&maps, nk, img_win.rows, img_win.cols, &mut pooled, &mut arg);
            head.forward(params, &pooled);
            preds.push(argmax(&head.logits));
        }
    }
    Ok(Evaluation::from_predictions(preds, &data.labels, params.arch.classes))
}
