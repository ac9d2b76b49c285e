use super::dataset::Image8;
use crate::{Error, Grid, Result};

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;

const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Summed-area table with a zero first row and column.
fn integral(rows: usize, cols: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let w = cols + 1;
    let mut s = vec![0.0; (rows + 1) * w];
    for r in 0..rows {
        let mut run = 0.0;
        for c in 0..cols {
            run += f(r * cols + c);
            s[(r + 1) * w + c + 1] = s[r * w + c + 1] + run;
        }
    }
    s
}

/// Mean SSIM over every 8×8 window position, uniform weights.
pub fn ssim(a: &Grid<u8>, b: &Grid<u8>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let (rows, cols) = a.shape();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {rows}x{cols}"
        )));
    }
    let (x, y) = (a.as_slice(), b.as_slice());
    let sx = integral(rows, cols, |i| x[i] as f64);
    let sy = integral(rows, cols, |i| y[i] as f64);
    let sxx = integral(rows, cols, |i| (x[i] as f64).powi(2));
    let syy = integral(rows, cols, |i| (y[i] as f64).powi(2));
    let sxy = integral(rows, cols, |i| x[i] as f64 * y[i] as f64);
    let w = cols + 1;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let boxsum = |s: &[f64], r: usize, c: usize| {
        let (r1, c1) = (r + SSIM_WINDOW, c + SSIM_WINDOW);
        s[r1 * w + c1] - s[r * w + c1] - s[r1 * w + c] + s[r * w + c]
    };
    let mut total = 0.0;
    let positions = (rows - SSIM_WINDOW + 1) * (cols - SSIM_WINDOW + 1);
    for r in 0..=rows - SSIM_WINDOW {
        for c in 0..=cols - SSIM_WINDOW {
            let (tx, ty) = (boxsum(&sx, r, c), boxsum(&sy, r, c));
            let (mx, my) = (tx / n, ty / n);
            let vx = ((boxsum(&sxx, r, c) - tx * mx) / (n - 1.0)).max(0.0);
            let vy = ((boxsum(&syy, r, c) - ty * my) / (n - 1.0)).max(0.0);
            let cov = (boxsum(&sxy, r, c) - tx * my) / (n - 1.0);
            total += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        }
    }
    Ok(total / positions as f64)
}

/// Channel-averaged SSIM of two multi-channel images.
pub fn ssim_image(a: &Image8, b: &Image8) -> Result<f64> {
    if a.channels() != b.channels() {
        return Err(Error::InvalidArgument(format!(
            "channel count differs: {} vs {}",
            a.channels(),
            b.channels()
        )));
    }
    let mut acc = 0.0;
    for (pa, pb) in a.planes().iter().zip(b.planes()) {
        acc += ssim(pa, pb)?;
    }
    Ok(acc / a.channels() as f64)
}

/// Mean of [`ssim_image`] over paired image lists.
pub fn mean_ssim(a: &[Image8], b: &[Image8]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need two equal, non-empty image lists, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += ssim_image(x, y)?;
    }
    Ok(acc / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(n: usize) -> Grid<u8> {
        Grid::from_fn(n, n, |r, c| if (r + c) % 2 == 0 { 255 } else { 0 })
    }

    /// Direct per-window evaluation, no summed-area tables.
    fn ssim_direct(a: &Grid<u8>, b: &Grid<u8>) -> f64 {
        let (rows, cols) = a.shape();
        let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
        let mut total = 0.0;
        let mut count = 0;
        for r in 0..=rows - SSIM_WINDOW {
            for c in 0..=cols - SSIM_WINDOW {
                let xs: Vec<f64> = (0..n as usize).map(|i| a[(r + i / 8, c + i % 8)] as f64).collect();
                let ys: Vec<f64> = (0..n as usize).map(|i| b[(r + i / 8, c + i % 8)] as f64).collect();
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
                let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
                let cov = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (n - 1.0);
                total += ((2.0 * mx * my + C1) * (2.0 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn identity_is_one() {
        let g = Grid::from_fn(12, 10, |r, c| ((r * 37 + c * 11) % 256) as u8);
        assert!((ssim(&g, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_checkerboard_is_negative() {
        let g = checker(16);
        let inv = g.map(|&v| 255 - v);
        assert!(ssim(&g, &inv).unwrap() < 0.0);
    }

    #[test]
    fn matches_direct_window_sum() {
        let a = Grid::from_fn(14, 11, |r, c| ((r * 53 + c * 29 + r * c) % 256) as u8);
        let b = Grid::from_fn(14, 11, |r, c| ((r * 7 + c * 61) % 256) as u8);
        assert!((ssim(&a, &b).unwrap() - ssim_direct(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch_and_small_images_fail() {
        assert!(ssim(&checker(8), &checker(9)).is_err());
        assert!(ssim(&checker(7), &checker(7)).is_err());
    }
}
