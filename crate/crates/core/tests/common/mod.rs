//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the FFT or perf code under test.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use dcnn::Grid;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_binary(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Grid<u8> {
    Grid::from_fn(rows, cols, |_, _| rng.gen_bool(0.5) as u8)
}

/// Unitary 2D DFT written as the double sum, `sign` = -1 forward, +1 inverse.
pub fn dft_sum(x: &Grid<Complex64>, sign: f64) -> Grid<Complex64> {
    let (r, c) = x.shape();
    let norm = 1.0 / ((r * c) as f64).sqrt();
    Grid::from_fn(r, c, |u, v| {
        let mut acc = Complex64::new(0.0, 0.0);
        for y in 0..r {
            for z in 0..c {
                let phase = sign * 2.0 * PI * (((u * y) % r) as f64 / r as f64 + ((v * z) % c) as f64 / c as f64);
                acc += x[(y, z)] * Complex64::from_polar(1.0, phase);
            }
        }
        acc * norm
    })
}

/// `|IDFT(DFT(x) · K)|²` with `K` given DC-centred: frequency `u` reads the
/// mask at `(u + n/2) mod n`.
pub fn conv_theorem_oracle(x: &Grid<u8>, centred_kernel: &Grid<f64>) -> Grid<f64> {
    let (r, c) = x.shape();
    let field = x.map(|&v| Complex64::new(v as f64, 0.0));
    let mut spec = dft_sum(&field, -1.0);
    for u in 0..r {
        for v in 0..c {
            spec[(u, v)] *= centred_kernel[((u + r / 2) % r, (v + c / 2) % c)];
        }
    }
    dft_sum(&spec, 1.0).map(|z| z.norm_sqr())
}

pub fn rel_rms(got: &Grid<f64>, want: &Grid<f64>) -> f64 {
    let num: f64 = got.iter().zip(want.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = want.iter().map(|b| b * b).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

pub fn max_abs_diff(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Efficiency with FFT-based convolution, typed in from the formula.
pub fn fft_ops_per_watt(m: f64, n: f64, km: f64, kn: f64, i: f64, k: f64, f: f64, p: f64) -> f64 {
    let log2 = |v: f64| v.ln() / 2f64.ln();
    (10.0 * m * log2((2.0 * i - 1.0) * m) * n * log2(n) + km * kn) * i * k * f / p
}

/// Efficiency with direct sliding-window convolution.
pub fn brute_ops_per_watt(m: f64, n: f64, km: f64, kn: f64, i: f64, k: f64, f: f64, p: f64) -> f64 {
    (m * n * km * kn) * i * f * k / p
}

/// Directory holding `mnist/` (and optionally `quickdraw/`, `cifar10/`).
pub fn data_dir() -> PathBuf {
    PathBuf::from(std::env::var("DCNN_DATA_DIR").unwrap_or_else(|_| "/root/data".into()))
}

/// Writes an MNIST-format dataset where class `c` is a bright bar whose
/// position depends on `c`, with a little grey noise.
pub fn write_synthetic_mnist(dir: &std::path::Path, n_train: usize, n_test: usize, seed: u64) {
    let mut r = rng(seed);
    let mut write = |images: &str, labels: &str, n: usize| {
        let mut img = vec![0u8, 0, 8, 3];
        for v in [n as u32, 28, 28] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        let mut lab = vec![0u8, 0, 8, 1];
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        for i in 0..n {
            let c = i % 10;
            for y in 0..28 {
                for x in 0..28 {
                    let bar = if c < 5 {
                        (4 + 4 * c..8 + 4 * c).contains(&y)
                    } else {
                        (4 + 4 * (c - 5)..8 + 4 * (c - 5)).contains(&x)
                    };
                    img.push(if bar {
                        r.gen_range(200..=255)
                    } else {
                        r.gen_range(0..40)
                    });
                }
            }
            lab.push(c as u8);
        }
        std::fs::write(dir.join(images), img).unwrap();
        std::fs::write(dir.join(labels), lab).unwrap();
    };
    write("train-images-idx3-ubyte", "train-labels-idx1-ubyte", n_train);
    write("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", n_test);
}
