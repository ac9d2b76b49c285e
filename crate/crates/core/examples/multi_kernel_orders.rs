//! Two kernels on diffraction orders 0 and 1 in a single exposure, with and
//! without the aperture that separates their outputs.
use dcnn::optics::{
    forward_4f, multi_kernel_forward, ApertureMask, FieldPlane, OpticalConfig, OrderWeights, OrderedKernel,
    WindowLayout,
};
use dcnn::Grid;

fn max_diff(a: &Grid<f64>, b: &Grid<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> dcnn::Result<()> {
    let n = 48;
    let cfg = OpticalConfig::default();
    let image = Grid::from_fn(n, n, |r, c| ((r / 6 + c / 6) % 2 == 0 && r > 8 && c > 8) as u8);
    let field = FieldPlane::from_binary(&image, cfg.dmd_pitch_m)?;
    let low = Grid::from_fn(n, n, |r, c| {
        (r.abs_diff(n / 2) < 6 && c.abs_diff(n / 2) < 6) as u8 as f64
    });
    let high = low.map(|&v| 1.0 - v);
    let kernels = vec![
        OrderedKernel {
            order: 0,
            mask: low.clone(),
        },
        OrderedKernel {
            order: 1,
            mask: high.clone(),
        },
    ];
    let orders = [0, 1];
    let aperture = ApertureMask::ideal(&WindowLayout::spanning(&orders, n, n)?, &orders)?;
    let separated = multi_kernel_forward(&field, &kernels, &cfg, Some(&aperture), &OrderWeights::uniform())?;
    let mixed = multi_kernel_forward(&field, &kernels, &cfg, None, &OrderWeights::uniform())?;

    let reference = [forward_4f(&field, &low, &cfg)?, forward_4f(&field, &high, &cfg)?];
    for (j, r) in reference.iter().enumerate() {
        println!(
            "order {j}: with aperture max |diff| {:.2e}, without aperture {:.2e}",
            max_diff(&separated[j], r),
            max_diff(&mixed[j], r)
        );
    }
    Ok(())
}
