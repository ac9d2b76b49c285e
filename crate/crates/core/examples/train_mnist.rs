//! Two-stage training on a slice of MNIST: stage 1 learns binary Fourier
//! kernels and the head on noise-free simulation, stage 2 retrains the head on
//! features captured with camera noise.
//!
//! Arguments: `[train images] [test images] [epochs]`, default 2000 500 1.
use std::path::PathBuf;

use dcnn::datapipe::load_mnist;
use dcnn::network::{capture_features, evaluate, finetune_stage2, train_stage1, Acquisition, BinarySet, TrainConfig};
use dcnn::optics::{CameraSpec, NoiseSpec};

fn main() -> dcnn::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (n_train, n_test, epochs) = (
        args.first().copied().unwrap_or(2000),
        args.get(1).copied().unwrap_or(500),
        args.get(2).copied().unwrap_or(1),
    );
    let dir = PathBuf::from(std::env::var("DCNN_DATA_DIR").unwrap_or_else(|_| "/root/data".into())).join("mnist");
    let split = match load_mnist(&dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("MNIST not found under {}: {e}", dir.display());
            return Ok(());
        }
    };
    let train = BinarySet::thresholded(&split.train.take(n_train), 0.8)?;
    let test = BinarySet::thresholded(&split.test.take(n_test), 0.8)?;
    let cfg = TrainConfig {
        epochs_stage1: epochs,
        epochs_stage2: 3,
        grid: 128,
        seed: 1,
        ..TrainConfig::default()
    };

    let (params, trace) = train_stage1(&train, &cfg)?;
    print!("{}", trace.to_csv());
    let noisy = Acquisition::noisy(
        CameraSpec {
            bin: 1,
            noise: NoiseSpec::multiplicative(0.05),
        },
        3,
    );
    println!(
        "stage 1, noise-free test accuracy {:.3}",
        evaluate(&params, &test, &Acquisition::digital())?.accuracy
    );
    println!(
        "stage 1, noisy camera test accuracy {:.3}",
        evaluate(&params, &test, &noisy)?.accuracy
    );

    let captured = capture_features(&params, &train, &noisy)?;
    let (tuned, _) = finetune_stage2(&params, &captured, &cfg)?;
    println!(
        "stage 2, noisy camera test accuracy {:.3}",
        evaluate(&tuned, &test, &noisy)?.accuracy
    );
    Ok(())
}
