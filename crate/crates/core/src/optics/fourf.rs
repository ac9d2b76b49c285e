use std::collections::BTreeMap;

use num_complex::Complex64;

use super::config::{order_offset_px, OpticalConfig};
use super::field::{ApertureMask, FieldPlane, Rect, WindowLayout};
use crate::fft::{centered_to_dft, Direction, Fft2, Scratch};
use crate::{Error, Grid, Result};

/// Orientation of the detected image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Undo the 4f inversion so outputs line up with inputs.
    #[default]
    Normalized,
    /// Keep the point-reflected image a real 4f system produces.
    Physical,
}

/// A Fourier-plane kernel (centred layout) assigned to a diffraction order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedKernel {
    pub order: i32,
    pub mask: Grid<f64>,
}

/// Relative field amplitude carried by each diffraction-order replica of the
/// input spectrum. Orders not listed carry 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderWeights(BTreeMap<i32, f64>);

impl OrderWeights {
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn with(mut self, order: i32, weight: f64) -> Self {
        self.0.insert(order, weight);
        self
    }

    pub fn get(&self, order: i32) -> f64 {
        self.0.get(&order).copied().unwrap_or(1.0)
    }
}

/// Single-kernel 4f convolution with inversion normalized away.
pub fn forward_4f(input: &FieldPlane, kernel: &Grid<f64>, config: &OpticalConfig) -> Result<Grid<f64>> {
    forward_4f_oriented(input, kernel, config, Orientation::Normalized)
}

pub fn forward_4f_oriented(
    input: &FieldPlane,
    kernel: &Grid<f64>,
    config: &OpticalConfig,
    orientation: Orientation,
) -> Result<Grid<f64>> {
    config.validate()?;
    check_kernel(kernel, input.shape())?;
    let (rows, cols) = input.shape();
    let fft = Fft2::new(rows, cols)?;
    let mut scratch = Scratch::default();

    let mut field = input.amplitude().clone();
    fft.forward(field.as_mut_slice(), &mut scratch);
    apply_centered_mask(&mut field, kernel, 1.0);
    detect_after_lens(&fft, field, orientation, &mut scratch)
}

/// Several kernels in one exposure using the diffraction-order replicas of
/// the input spectrum.
///
/// Kernel `j` sits in the Fourier window of its order. Every order images
/// onto the same camera area, so without an aperture each output is the
/// coherent sum of all kernel paths. With an aperture, output `j` only
/// receives the light passing open region `j`.
pub fn multi_kernel_forward(
    input: &FieldPlane,
    kernels: &[OrderedKernel],
    config: &OpticalConfig,
    aperture: Option<&ApertureMask>,
    weights: &OrderWeights,
) -> Result<Vec<Grid<f64>>> {
    config.validate()?;
    let (rows, cols) = input.shape();
    let orders: Vec<i32> = kernels.iter().map(|k| k.order).collect();
    let layout = WindowLayout::spanning(&orders, rows, cols)?;
    for (i, k) in kernels.iter().enumerate() {
        check_kernel(&k.mask, (rows, cols))?;
        order_offset_px(k.order, config)?;
        if kernels[..i].iter().any(|p| p.order == k.order) {
            return Err(Error::OverlappingWindows(k.order));
        }
    }
    if let Some(ap) = aperture {
        if ap.shape() != layout.extended_shape() {
            return Err(Error::DimensionMismatch {
                expected: layout.extended_shape(),
                found: ap.shape(),
            });
        }
        if ap.open_regions().len() != kernels.len() {
            return Err(Error::InvalidArgument(format!(
                "aperture has {} open regions for {} kernels",
                ap.open_regions().len(),
                kernels.len()
            )));
        }
    }

    let fft = Fft2::new(rows, cols)?;
    let mut scratch = Scratch::default();
    let mut spectrum = input.amplitude().clone();
    fft.forward(spectrum.as_mut_slice(), &mut scratch);

    // field leaving DMD#2 inside each kernel window
    let products: Vec<(Rect, Grid<Complex64>)> = kernels
        .iter()
        .map(|k| {
            let mut p = spectrum.clone();
            apply_centered_mask(&mut p, &k.mask, weights.get(k.order));
            (layout.window(k.order), p)
        })
        .collect();

    match aperture {
        None => {
            let summed = image_through_region(&fft, &products, None, rows, cols, &mut scratch);
            let out = detect(summed, Orientation::Normalized, &fft, &mut scratch, false)?;
            Ok(vec![out; kernels.len()])
        }
        Some(ap) => ap
            .open_regions()
            .iter()
            .map(|region| {
                let field = image_through_region(&fft, &products, Some(region), rows, cols, &mut scratch);
                detect(field, Orientation::Normalized, &fft, &mut scratch, false)
            })
            .collect(),
    }
}

fn check_kernel(kernel: &Grid<f64>, shape: (usize, usize)) -> Result<()> {
    kernel.ensure_shape(shape)?;
    if kernel.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "Fourier kernel must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Multiplies a DFT-ordered spectrum by a centred mask and a scalar weight.
fn apply_centered_mask(spectrum: &mut Grid<Complex64>, mask: &Grid<f64>, weight: f64) {
    let (rows, cols) = spectrum.shape();
    for r in 0..rows {
        let kr = centered_to_dft(r, rows);
        for c in 0..cols {
            let kc = centered_to_dft(c, cols);
            spectrum[(kr, kc)] *= mask[(r, c)] * weight;
        }
    }
}

/// Sum over kernel windows of the light that passes `region` (all of it when
/// `region` is `None`), transformed by L2. Returned before the orientation flip.
fn image_through_region(
    fft: &Fft2,
    products: &[(Rect, Grid<Complex64>)],
    region: Option<&Rect>,
    rows: usize,
    cols: usize,
    scratch: &mut Scratch,
) -> Grid<Complex64> {
    let mut acc: Option<Grid<Complex64>> = None;
    for (window, product) in products {
        let passed = match region {
            None => product.clone(),
            Some(region) => {
                let Some(open) = window.intersect(region) else {
                    continue;
                };
                if open == *window {
                    product.clone()
                } else {
                    let mut p = product.clone();
                    for r in 0..rows {
                        for c in 0..cols {
                            let inside = open.contains(r + window.row, c + window.col);
                            if !inside {
                                p[(centered_to_dft(r, rows), centered_to_dft(c, cols))] = Complex64::default();
                            }
                        }
                    }
                    p
                }
            }
        };
        let mut field = passed;
        fft.forward(field.as_mut_slice(), scratch);
        acc = Some(match acc {
            None => field,
            Some(mut a) => {
                for (x, y) in a.as_mut_slice().iter_mut().zip(field.iter()) {
                    *x += *y;
                }
                a
            }
        });
    }
    acc.unwrap_or_else(|| Grid::zeros(rows, cols))
}

fn detect_after_lens(
    fft: &Fft2,
    product: Grid<Complex64>,
    orientation: Orientation,
    scratch: &mut Scratch,
) -> Result<Grid<f64>> {
    detect(product, orientation, fft, scratch, true)
}

/// Optional L2 transform, orientation flip and square-law detection.
fn detect(
    mut field: Grid<Complex64>,
    orientation: Orientation,
    fft: &Fft2,
    scratch: &mut Scratch,
    transform: bool,
) -> Result<Grid<f64>> {
    if transform {
        fft.transform(field.as_mut_slice(), Direction::Forward, scratch);
    }
    let (rows, cols) = field.shape();
    let out = match orientation {
        Orientation::Physical => field.map(|v| v.norm_sqr()),
        Orientation::Normalized => Grid::from_fn(rows, cols, |r, c| {
            field[((rows - r) % rows, (cols - c) % cols)].norm_sqr()
        }),
    };
    if !out.all_finite() {
        return Err(Error::Numerical("non-finite intensity in 4f output".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_binary(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Grid<u8> {
        Grid::from_fn(rows, cols, |_, _| rng.gen_bool(0.5) as u8)
    }

    fn rel_rms(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
        let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn all_pass_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = random_binary(16, 16, &mut rng);
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let out = forward_4f(&field, &Grid::filled(16, 16, 1.0), &OpticalConfig::default()).unwrap();
        let expected = frame.map(|&v| v as f64);
        let rms = (out
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 256.0)
            .sqrt();
        assert!(rms < 1e-9, "rms {rms}");
    }

    #[test]
    fn physical_orientation_is_point_reflected() {
        let mut frame = Grid::<u8>::zeros(8, 8);
        frame[(1, 2)] = 1;
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let out = forward_4f_oriented(
            &field,
            &Grid::filled(8, 8, 1.0),
            &OpticalConfig::default(),
            Orientation::Physical,
        )
        .unwrap();
        assert!((out[(7, 6)] - 1.0).abs() < 1e-12);
        assert!(out[(1, 2)].abs() < 1e-12);
    }

    #[test]
    fn zero_kernel_blocks_everything() {
        let frame = Grid::filled(8, 8, 1u8);
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let out = forward_4f(&field, &Grid::zeros(8, 8), &OpticalConfig::default()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_shape_and_sign_are_checked() {
        let field = FieldPlane::from_binary(&Grid::zeros(8, 8), 7.6e-6).unwrap();
        let cfg = OpticalConfig::default();
        assert!(matches!(
            forward_4f(&field, &Grid::zeros(8, 4), &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(forward_4f(&field, &Grid::filled(8, 8, -1.0), &cfg).is_err());
    }

    #[test]
    fn single_kernel_multi_path_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frame = random_binary(16, 16, &mut rng);
        let kernel = random_binary(16, 16, &mut rng).map(|&v| v as f64);
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let cfg = OpticalConfig::default();
        let single = forward_4f(&field, &kernel, &cfg).unwrap();
        let layout = WindowLayout::spanning(&[0], 16, 16).unwrap();
        let ap = ApertureMask::ideal(&layout, &[0]).unwrap();
        let multi = multi_kernel_forward(
            &field,
            &[OrderedKernel { order: 0, mask: kernel }],
            &cfg,
            Some(&ap),
            &OrderWeights::uniform(),
        )
        .unwrap();
        assert_eq!(multi.len(), 1);
        assert_eq!(multi[0], single);
    }

    #[test]
    fn two_orders_match_single_runs_and_cross_talk_without_aperture() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let frame = random_binary(16, 16, &mut rng);
        let ka = random_binary(16, 16, &mut rng).map(|&v| v as f64);
        let kb = random_binary(16, 16, &mut rng).map(|&v| v as f64);
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let cfg = OpticalConfig::default();
        let kernels = vec![
            OrderedKernel {
                order: 0,
                mask: ka.clone(),
            },
            OrderedKernel {
                order: 1,
                mask: kb.clone(),
            },
        ];
        let layout = WindowLayout::spanning(&[0, 1], 16, 16).unwrap();
        let ap = ApertureMask::ideal(&layout, &[0, 1]).unwrap();
        let out = multi_kernel_forward(&field, &kernels, &cfg, Some(&ap), &OrderWeights::uniform()).unwrap();
        assert!(rel_rms(&out[0], &forward_4f(&field, &ka, &cfg).unwrap()) < 1e-9);
        assert!(rel_rms(&out[1], &forward_4f(&field, &kb, &cfg).unwrap()) < 1e-9);

        let open = multi_kernel_forward(&field, &kernels, &cfg, None, &OrderWeights::uniform()).unwrap();
        assert!(rel_rms(&open[0], &out[0]) > 1e-3);
        assert!(rel_rms(&open[1], &out[1]) > 1e-3);
    }

    #[test]
    fn permuting_kernels_permutes_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let frame = random_binary(8, 8, &mut rng);
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let cfg = OpticalConfig::short_focal();
        let masks: Vec<Grid<f64>> = (0..3)
            .map(|_| random_binary(8, 8, &mut rng).map(|&v| v as f64))
            .collect();
        let run = |orders: [i32; 3]| {
            let ks: Vec<OrderedKernel> = orders
                .iter()
                .zip(&masks)
                .map(|(&o, m)| OrderedKernel {
                    order: o,
                    mask: m.clone(),
                })
                .collect();
            let layout = WindowLayout::spanning(&orders, 8, 8).unwrap();
            let ap = ApertureMask::ideal(&layout, &orders).unwrap();
            multi_kernel_forward(&field, &ks, &cfg, Some(&ap), &OrderWeights::uniform()).unwrap()
        };
        let a = run([0, 1, 2]);
        let b = run([2, 0, 1]);
        for j in 0..3 {
            assert!(rel_rms(&a[j], &b[j]) < 1e-12);
        }
    }

    #[test]
    fn order_weights_scale_intensity_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let frame = random_binary(8, 8, &mut rng);
        let field = FieldPlane::from_binary(&frame, 7.6e-6).unwrap();
        let cfg = OpticalConfig::default();
        let mask = random_binary(8, 8, &mut rng).map(|&v| v as f64);
        let ks = vec![
            OrderedKernel {
                order: 0,
                mask: mask.clone(),
            },
            OrderedKernel {
                order: 1,
                mask: mask.clone(),
            },
        ];
        let layout = WindowLayout::spanning(&[0, 1], 8, 8).unwrap();
        let ap = ApertureMask::ideal(&layout, &[0, 1]).unwrap();
        let out = multi_kernel_forward(&field, &ks, &cfg, Some(&ap), &OrderWeights::uniform().with(1, 0.5)).unwrap();
        for (a, b) in out[0].iter().zip(out[1].iter()) {
            assert!((a * 0.25 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn window_and_aperture_errors() {
        let field = FieldPlane::from_binary(&Grid::zeros(8, 8), 7.6e-6).unwrap();
        let cfg = OpticalConfig::default();
        let m = Grid::filled(8, 8, 1.0);
        let same = vec![
            OrderedKernel {
                order: 0,
                mask: m.clone(),
            },
            OrderedKernel {
                order: 0,
                mask: m.clone(),
            },
        ];
        assert!(matches!(
            multi_kernel_forward(&field, &same, &cfg, None, &OrderWeights::uniform()),
            Err(Error::OverlappingWindows(0))
        ));
        let far = vec![OrderedKernel {
            order: 2,
            mask: m.clone(),
        }];
        assert!(multi_kernel_forward(&field, &far, &cfg, None, &OrderWeights::uniform()).is_err());
        // leaky aperture: region 0 reaches into the order-1 window
        let err = ApertureMask::new(8, 16, vec![Rect::new(0, 0, 8, 10), Rect::new(0, 8, 8, 8)]).unwrap_err();
        assert!(matches!(err, Error::CrosstalkNotBlocked(0, 1)));
    }
}
