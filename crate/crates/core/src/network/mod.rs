//! The hybrid classifier: a Fourier-domain binary-kernel convolution layer
//! (optical, or its digital equivalent), max-pooling and two fully connected
//! layers, trained in two stages.
//!
//! Stage 1 trains kernels and head together in the noise-free digital model,
//! with binarization in the forward pass and a straight-through estimator in
//! the backward pass. Stage 2 freezes the kernels, captures features through
//! the noisy hardware model and retrains only the head.

mod checkpoint;
mod conv;
mod model;
mod params;
mod train;

pub use checkpoint::{encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use conv::{Acquisition, ConvMode, KernelTransfer};
pub use params::{
    binarize_ste, highpass_bins, ste_backward, Architecture, Dense, ModelParams, HIDDEN_UNITS, HIGHPASS_SIDE,
    KERNEL_COUNT, STE_CLIP,
};
pub use train::{
    batch_loss, capture_features, capture_features_threaded, captured_loss, continue_stage1, evaluate,
    evaluate_captured, evaluate_threaded, evaluate_tiled, finetune_stage2, loss_and_gradient, train_stage1, BinarySet,
    CapturedSet, Evaluation, Gradients, Trace, TraceRow, TrainConfig,
};

use crate::{Error, Grid, Result};
use model::{maxpool, HeadState, Pass};

/// Feature maps of one image after the camera: one `rows × cols` map per
/// kernel, jointly scaled to unit maximum. `stream` selects the camera noise.
pub fn conv_fourier_forward(
    planes: &[Grid<u8>],
    params: &ModelParams,
    acq: &Acquisition,
    stream: u64,
) -> Result<Vec<Grid<f64>>> {
    params.check_consistent()?;
    acq.validate()?;
    let mut pass = Pass::new(params, KernelTransfer::Binary);
    pass.conv(params, planes, acq)?;
    pass.features(params, acq, stream)?;
    let (r, c) = params.arch.image;
    pass.maps
        .chunks_exact(r * c)
        .map(|m| Grid::from_vec(r, c, m.to_vec()))
        .collect()
}

/// Max-pool, FC1 + ReLU, FC2.
pub fn head_forward(maps: &[Grid<f64>], params: &ModelParams) -> Result<Vec<f64>> {
    let (r, c) = params.arch.image;
    if maps.len() != params.arch.kernels {
        return Err(Error::InvalidArgument(format!(
            "{} feature maps for {} kernels",
            maps.len(),
            params.arch.kernels
        )));
    }
    let mut flat = Vec::with_capacity(maps.len() * r * c);
    for m in maps {
        m.ensure_shape((r, c))?;
        flat.extend_from_slice(m.as_slice());
    }
    let (mut pooled, mut arg) = (Vec::new(), Vec::new());
    maxpool(&flat, maps.len(), r, c, &mut pooled, &mut arg);
    head_logits(&pooled, params)
}

/// FC1 + ReLU, FC2 on a pooled feature vector.
pub fn head_logits(pooled: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    if pooled.len() != params.fc1.inputs {
        return Err(Error::DimensionMismatch {
            expected: (params.fc1.inputs, 1),
            found: (pooled.len(), 1),
        });
    }
    let mut head = HeadState::default();
    head.forward(params, pooled);
    Ok(head.logits)
}
