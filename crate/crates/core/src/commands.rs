//! The six pipeline commands behind the `dcnn` binary, callable as library
//! functions. Every command writes into a run directory named after the
//! hash of its resolved configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datapipe::export::{write_stacks, PlaneManifest};
use crate::datapipe::{
    binarize_gray, load_cifar10, load_mnist, load_quickdraw, mean_ssim, quantize, recombine, ssim, threshold_to_image,
    untile, Dataset, DatasetKind, Image8, LayoutSpec, Split, TileLayout,
};
use crate::network::{
    capture_features_threaded, evaluate_threaded, evaluate_tiled, finetune_stage2, load_checkpoint, save_checkpoint,
    train_stage1, Acquisition, BinarySet, ConvMode, Evaluation, ModelParams, TrainConfig,
};
use crate::optics::export::{write_pgm, write_raw};
use crate::optics::{
    multi_kernel_forward, ApertureMask, CameraSpec, FieldPlane, NoiseSpec, OpticalConfig, OrderWeights, OrderedKernel,
    WindowLayout,
};
use crate::perfmodel::{generation_preset, preset_stages, sweep_report, ConvMethod, PerfScenario, Stage, SweepReport};
use crate::{Error, Grid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Directory holding the dataset files.
    pub path: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Training images captured through the hardware model for stage 2.
    pub capture_limit: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Mnist,
            path: PathBuf::from("data/mnist"),
            train_limit: None,
            test_limit: None,
            capture_limit: Some(10_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeConfig {
    /// Thresholds per channel; `None` means a single threshold relative to
    /// the image maximum (grayscale only).
    pub levels: Option<usize>,
    pub threshold_frac: f64,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        QuantizeConfig {
            levels: None,
            threshold_frac: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: ConvMode,
    pub noise: NoiseSpec,
    /// Evaluate with many images per input frame.
    pub tiled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfConfig {
    pub presets: Vec<String>,
    pub modes: Vec<ConvMethod>,
    /// Extra scenarios; each runs as a single stage at its own frame rate.
    pub custom: Vec<PerfScenario>,
}

impl Default for PerfConfig {
    fn default() -> Self {
        PerfConfig {
            presets: ["Gen1.0", "Gen1.1", "Gen1.2", "Gen1.3"].map(String::from).to_vec(),
            modes: vec![ConvMethod::Fft, ConvMethod::Brute],
            custom: Vec::new(),
        }
    }
}

/// Whole-run configuration. Loaded from TOML; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The single seed of the run; it replaces `train.seed`.
    pub seed: u64,
    /// Worker threads for capture and evaluation. Training is sequential.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub optics: OpticalConfig,
    pub quantize: QuantizeConfig,
    pub layout: LayoutSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub perf: PerfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            out_dir: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            optics: OpticalConfig::default(),
            quantize: QuantizeConfig::default(),
            layout: LayoutSpec::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            perf: PerfConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        self.train.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        self.optics.validate()?;
        self.train.validate()?;
        self.eval.noise.validate()?;
        if let Some(0) = self.quantize.levels {
            return Err(Error::InvalidConfig("quantize.levels must be at least 1".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        let digest = Sha256::digest(&json);
        Ok(digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }

    /// `out_dir/run-<hash>`, created along with a copy of the config.
    pub fn run_dir(&self) -> Result<PathBuf> {
        let dir = self.out_dir.join(format!("run-{}", self.hash()?));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(dir)
    }

    pub fn load_split(&self) -> Result<Split> {
        let p = &self.dataset.path;
        match self.dataset.kind {
            DatasetKind::Mnist => load_mnist(p),
            DatasetKind::Quickdraw => load_quickdraw(p),
            DatasetKind::Cifar10 => load_cifar10(p),
        }
    }

    /// Binary network inputs for a dataset under this config.
    pub fn binary_set(&self, ds: &Dataset) -> Result<BinarySet> {
        match self.quantize.levels {
            Some(l) => BinarySet::quantized(ds, l),
            None => BinarySet::thresholded(ds, self.quantize.threshold_frac),
        }
    }

    fn limited(ds: &Dataset, limit: Option<usize>) -> Dataset {
        limit.map_or_else(|| ds.clone(), |n| ds.take(n))
    }

    /// Simulation-grid layout for tiled evaluation: unscaled images in a
    /// `grid × grid` frame.
    pub fn sim_layout(&self) -> Result<TileLayout> {
        let g = self.train.grid;
        let sim = OpticalConfig {
            dmd_rows: g,
            dmd_cols: g,
            superpixel: 1,
            horizontal_expand: 1,
            ..self.optics.clone()
        };
        let spec = LayoutSpec {
            padding: 1,
            grid: self.layout.grid.or(Some(self.dataset.kind.tiles_per_frame())),
            ..self.layout.clone()
        };
        spec.layout(self.dataset.kind, &sim)
    }

    pub fn acquisition(&self, noise: NoiseSpec, mode: ConvMode) -> Acquisition {
        Acquisition {
            mode,
            camera: CameraSpec { bin: 1, noise },
            seed: self.seed,
            optics: self.optics.clone(),
        }
    }
}

/// Result of [`cmd_quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeSummary {
    pub manifest: PlaneManifest,
    pub planes_path: PathBuf,
    pub mean_ssim: f64,
}

/// Converts the training split to bit-planes, writes them with a manifest
/// and scores the conversion by mean SSIM.
pub fn cmd_quantize(cfg: &RunConfig, out_path: Option<&Path>) -> Result<QuantizeSummary> {
    cfg.validate()?;
    let split = cfg.load_split()?;
    let ds = RunConfig::limited(&split.train, cfg.dataset.train_limit);
    let mut stacks = Vec::with_capacity(ds.len());
    let mut scores = 0.0;
    for im in &ds.images {
        match cfg.quantize.levels {
            None => {
                let g = im.gray()?;
                let b = binarize_gray(g, cfg.quantize.threshold_frac)?;
                scores += ssim(g, &threshold_to_image(&b))?;
                let stack = crate::datapipe::BitPlaneStack {
                    planes: vec![b],
                    thresholds: vec![cfg.quantize.threshold_frac],
                    channel_of_plane: vec![0],
                    source_shape: (g.rows(), g.cols(), 1),
                    levels: 1,
                };
                stacks.push(stack);
            }
            Some(l) => {
                let s = quantize(im, l)?;
                scores += mean_ssim(std::slice::from_ref(im), &[recombine(&s)])?;
                stacks.push(s);
            }
        }
    }
    let mean = scores / ds.len().max(1) as f64;
    let path = match out_path {
        Some(p) => p.to_path_buf(),
        None => cfg.run_dir()?.join("planes.pbm"),
    };
    let manifest = write_stacks(&path, &stacks, Some(&ds.labels), Some(mean))?;
    println!(
        "quantized {} images into {} plane(s) each, mean SSIM {:.4}",
        manifest.images, manifest.planes_per_image, mean
    );
    Ok(QuantizeSummary {
        manifest,
        planes_path: path,
        mean_ssim: mean,
    })
}

/// Stage 1. Writes `stage1.ckpt` and `trace_stage1.csv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let split = cfg.load_split()?;
    let train = cfg.binary_set(&RunConfig::limited(&split.train, cfg.dataset.train_limit))?;
    let (params, trace) = train_stage1(&train, &cfg.train)?;
    let dir = cfg.run_dir()?;
    let ckpt = dir.join("stage1.ckpt");
    save_checkpoint(&ckpt, &params, cfg.seed, 1)?;
    trace.write_csv(&dir.join("trace_stage1.csv"))?;
    if let Some(last) = trace.rows.last() {
        println!(
            "stage 1 done: train accuracy {:.4}, loss {:.4}",
            last.accuracy, last.loss
        );
    }
    Ok(ckpt)
}

fn load_matching(cfg: &RunConfig, checkpoint: &Path, image: (usize, usize), classes: usize) -> Result<ModelParams> {
    let (params, _) = load_checkpoint(checkpoint)?;
    if params.arch.image != image {
        return Err(Error::DimensionMismatch {
            expected: params.arch.image,
            found: image,
        });
    }
    if params.arch.classes != classes || params.arch.grid != cfg.train.grid {
        return Err(Error::InvalidConfig(format!(
            "checkpoint has {} classes on a {} grid, config wants {} on {}",
            params.arch.classes, params.arch.grid, classes, cfg.train.grid
        )));
    }
    Ok(params)
}

/// Stage 2: captures training features with `train.noise` and retrains the
/// head. Writes `stage2.ckpt` and `trace_stage2.csv`.
pub fn cmd_finetune(cfg: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let split = cfg.load_split()?;
    let limit = match (cfg.dataset.capture_limit, cfg.dataset.train_limit) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let train = cfg.binary_set(&RunConfig::limited(&split.train, limit))?;
    let params = load_matching(cfg, checkpoint, train.image, train.classes)?;
    let acq = cfg.acquisition(cfg.train.noise, cfg.eval.mode);
    let captured = capture_features_threaded(&params, &train, &acq, cfg.threads)?;
    let (tuned, trace) = finetune_stage2(&params, &captured, &cfg.train)?;
    let dir = cfg.run_dir()?;
    let out = dir.join("stage2.ckpt");
    save_checkpoint(&out, &tuned, cfg.seed, 2)?;
    trace.write_csv(&dir.join("trace_stage2.csv"))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub dataset: DatasetKind,
    pub samples: usize,
    pub accuracy: f64,
    pub mode: ConvMode,
    pub tiled: bool,
    pub noise: NoiseSpec,
    /// `[true class][predicted class]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Test-split accuracy. Writes `metrics.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<Metrics> {
    cfg.validate()?;
    let split = cfg.load_split()?;
    let test = cfg.binary_set(&RunConfig::limited(&split.test, cfg.dataset.test_limit))?;
    let params = load_matching(cfg, checkpoint, test.image, test.classes)?;
    let acq = cfg.acquisition(cfg.eval.noise, cfg.eval.mode);
    let ev: Evaluation = if cfg.eval.tiled {
        evaluate_tiled(&params, &test, &cfg.sim_layout()?, &acq)?
    } else {
        evaluate_threaded(&params, &test, &acq, cfg.threads)?
    };
    let metrics = Metrics {
        dataset: cfg.dataset.kind,
        samples: test.len(),
        accuracy: ev.accuracy,
        mode: cfg.eval.mode,
        tiled: cfg.eval.tiled,
        noise: cfg.eval.noise,
        confusion: ev.confusion,
    };
    let dir = cfg.run_dir()?;
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;
    println!(
        "{:?}\taccuracy {:.2}%\t(n={}, {:?}, {})",
        metrics.dataset,
        100.0 * metrics.accuracy,
        metrics.samples,
        metrics.mode,
        if metrics.tiled { "tiled" } else { "single" }
    );
    Ok(metrics)
}

/// What [`cmd_simulate`] produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub frame: (usize, usize),
    pub images: usize,
    pub kernels: usize,
    /// One per image and kernel.
    pub windows: usize,
    pub dir: PathBuf,
}

/// Reads an 8-bit binary graymap (P5).
pub fn read_pgm(path: &Path) -> Result<Grid<u8>> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, pos as u64, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format(path, 0, "not a binary PGM (P5)"));
    }
    let num = |i: usize| {
        fields[i]
            .parse::<usize>()
            .map_err(|_| Error::format(path, 0, format!("bad header field {}", fields[i])))
    };
    let (cols, rows, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(path, 0, "only 8-bit PGM is supported"));
    }
    if bytes.len() < pos + rows * cols {
        return Err(Error::format(path, bytes.len() as u64, "truncated PGM data"));
    }
    Grid::from_vec(rows, cols, bytes[pos..pos + rows * cols].to_vec())
}

/// One optical frame end to end at DMD resolution: images tiled with the
/// configured layout, two kernels on diffraction orders 0 and 1 behind an
/// ideal aperture, camera noise from `eval.noise`.
///
/// `images` are binarized with `quantize.threshold_frac`. Kernels come from
/// the first two of `checkpoint` (embedded in the centre of the Fourier
/// plane) or are all-pass when no checkpoint is given.
pub fn cmd_simulate(cfg: &RunConfig, images: &[Grid<u8>], checkpoint: Option<&Path>) -> Result<SimulationSummary> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidArgument("nothing to simulate".into()));
    }
    let layout = cfg.layout.layout(cfg.dataset.kind, &cfg.optics)?;
    let binary = images
        .iter()
        .map(|g| binarize_gray(g, cfg.quantize.threshold_frac))
        .collect::<Result<Vec<_>>>()?;
    let frame = crate::datapipe::tile(&binary, &layout)?;
    let (rows, cols) = frame.shape();
    let masks: Vec<Grid<f64>> = match checkpoint {
        None => vec![Grid::filled(rows, cols, 1.0); 2],
        Some(p) => {
            let (params, _) = load_checkpoint(p)?;
            (0..params.arch.kernels.min(2))
                .map(|k| {
                    let b = params.binary_kernel(k).map(|&v| v as f64);
                    if b.rows() > rows || b.cols() > cols {
                        return Err(Error::FrameOverflow {
                            needed: b.shape(),
                            frame: (rows, cols),
                        });
                    }
                    let mut m = Grid::zeros(rows, cols);
                    m.paste(&b, rows / 2 - b.rows() / 2, cols / 2 - b.cols() / 2);
                    Ok(m)
                })
                .collect::<Result<_>>()?
        }
    };
    let kernels: Vec<OrderedKernel> = masks
        .into_iter()
        .enumerate()
        .map(|(o, mask)| OrderedKernel { order: o as i32, mask })
        .collect();
    let orders: Vec<i32> = kernels.iter().map(|k| k.order).collect();
    let aperture = ApertureMask::ideal(&WindowLayout::spanning(&orders, rows, cols)?, &orders)?;
    let field = FieldPlane::from_binary(&frame, cfg.optics.dmd_pitch_m)?;
    let outputs = multi_kernel_forward(&field, &kernels, &cfg.optics, Some(&aperture), &OrderWeights::uniform())?;

    let dir = cfg.run_dir()?.join("simulate");
    fs::create_dir_all(&dir)?;
    let pitch = cfg.optics.dmd_pitch_m;
    let input = frame.map(|&v| v as f64);
    write_pgm(&dir.join("input.pgm"), &input)?;
    write_raw(&dir.join("input.f64"), &input, pitch)?;
    let spectrum =
        crate::fft::Fft2::new(rows, cols)?.transform_grid(field.amplitude(), crate::fft::Direction::Forward)?;
    let magnitude = crate::fft::fftshift(&spectrum.map(|z| z.norm()));
    write_pgm(&dir.join("fourier_magnitude.pgm"), &magnitude.map(|v| v.ln_1p()))?;
    write_raw(&dir.join("fourier_magnitude.f64"), &magnitude, pitch)?;
    let mut rng = crate::optics::noise_rng(cfg.seed, 0);
    let camera = CameraSpec {
        bin: 1,
        noise: cfg.eval.noise,
    };
    let mut windows = 0;
    for (k, out) in outputs.iter().enumerate() {
        let shot = crate::optics::camera_capture(out, &camera, &mut rng)?;
        write_pgm(&dir.join(format!("kernel{k}.pgm")), &shot)?;
        write_raw(&dir.join(format!("kernel{k}.f64")), &shot, pitch)?;
        windows += untile(&shot, &layout, images.len())?.len();
    }
    let summary = SimulationSummary {
        frame: (rows, cols),
        images: images.len(),
        kernels: kernels.len(),
        windows,
        dir: dir.clone(),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "simulated {}x{} frame: {} images x {} kernels = {} output windows",
        rows, cols, summary.images, summary.kernels, summary.windows
    );
    Ok(summary)
}

/// Images for [`cmd_simulate`]: the first `count` test images, or one PGM file.
pub fn simulation_inputs(cfg: &RunConfig, image_path: Option<&Path>, count: usize) -> Result<Vec<Grid<u8>>> {
    if let Some(p) = image_path {
        return Ok(vec![read_pgm(p)?]);
    }
    let split = cfg.load_split()?;
    split
        .test
        .images
        .iter()
        .take(count)
        .map(|im: &Image8| im.gray().cloned())
        .collect()
}

/// Writes `perf.csv` and `perf.json`.
pub fn cmd_perf(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut presets = cfg
        .perf
        .presets
        .iter()
        .map(|name| Ok((generation_preset(name)?, preset_stages(name)?)))
        .collect::<Result<Vec<(PerfScenario, Vec<Stage>)>>>()?;
    for s in &cfg.perf.custom {
        s.validate()?;
        presets.push((s.clone(), vec![Stage::new(&s.label, s.frame_rate_hz)]));
    }
    let report = sweep_report(&presets, &cfg.perf.modes)?;
    let dir = cfg.run_dir()?;
    fs::write(dir.join("perf.csv"), report.to_csv())?;
    fs::write(dir.join("perf.json"), report.to_json()? + "\n")?;
    print!("{}", report.to_csv());
    Ok(report)
}
