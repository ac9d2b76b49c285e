//! One binary image through the 4f path with a low-pass Fourier kernel,
//! then a noisy camera capture.
use dcnn::optics::{camera_capture, forward_4f, noise_rng, CameraSpec, FieldPlane, NoiseSpec, OpticalConfig};
use dcnn::Grid;

fn main() -> dcnn::Result<()> {
    let n = 64;
    let cfg = OpticalConfig::default();
    // a hollow square
    let image = Grid::from_fn(n, n, |r, c| {
        let inside = (20..44).contains(&r) && (20..44).contains(&c);
        let hole = (26..38).contains(&r) && (26..38).contains(&c);
        (inside && !hole) as u8
    });
    let field = FieldPlane::from_binary(&image, cfg.dmd_pitch_m)?;
    // centred disc: keeps spatial frequencies below 8 cycles per frame
    let kernel = Grid::from_fn(n, n, |r, c| {
        let (dr, dc) = (r as f64 - (n / 2) as f64, c as f64 - (n / 2) as f64);
        ((dr * dr + dc * dc).sqrt() <= 8.0) as u8 as f64
    });
    let out = forward_4f(&field, &kernel, &cfg)?;
    let camera = CameraSpec {
        bin: 1,
        noise: NoiseSpec::multiplicative(0.05),
    };
    let shot = camera_capture(&out, &camera, &mut noise_rng(1, 0))?;

    let total_in: f64 = image.iter().map(|&v| v as f64).sum();
    let total_out: f64 = out.iter().sum();
    println!("input energy {total_in}, filtered energy {total_out:.2}");
    println!("centre row of the blurred square (noisy capture):");
    let row: Vec<String> = (0..n)
        .step_by(4)
        .map(|c| format!("{:.2}", shot[(n / 2 - 9, c)]))
        .collect();
    println!("  {}", row.join(" "));
    Ok(())
}
