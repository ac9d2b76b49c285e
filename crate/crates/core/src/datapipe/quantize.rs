use serde::{Deserialize, Serialize};

use super::dataset::Image8;
use crate::{Error, Grid, Result};

const FULL_SCALE: f64 = 255.0;

/// What the binarization threshold fraction is relative to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdReference {
    /// Brightest pixel of the image being converted.
    #[default]
    ImageMax,
    /// 8-bit full scale (255).
    FullScale,
}

/// Binary decomposition of an 8-bit image on a threshold ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct BitPlaneStack {
    pub planes: Vec<Grid<u8>>,
    /// Threshold of each plane as a fraction of full scale.
    pub thresholds: Vec<f64>,
    pub channel_of_plane: Vec<usize>,
    /// `(rows, cols, channels)` of the source image.
    pub source_shape: (usize, usize, usize),
    pub levels: usize,
}

impl BitPlaneStack {
    pub fn planes_of_channel(&self, channel: usize) -> impl Iterator<Item = &Grid<u8>> + '_ {
        self.planes
            .iter()
            .zip(&self.channel_of_plane)
            .filter(move |(_, &ch)| ch == channel)
            .map(|(p, _)| p)
    }
}

/// Pixel → 1 iff `pixel >= threshold_frac × max pixel of the image`.
/// An all-zero image gives an all-zero plane.
pub fn binarize_gray(image: &Grid<u8>, threshold_frac: f64) -> Result<Grid<u8>> {
    binarize_gray_with(image, threshold_frac, ThresholdReference::ImageMax)
}

pub fn binarize_gray_with(image: &Grid<u8>, threshold_frac: f64, reference: ThresholdReference) -> Result<Grid<u8>> {
    if image.is_empty() {
        return Err(Error::InvalidArgument("cannot binarize an empty image".into()));
    }
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold fraction must lie in (0, 1), got {threshold_frac}"
        )));
    }
    let max = match reference {
        ThresholdReference::ImageMax => *image.iter().max().expect("non-empty") as f64,
        ThresholdReference::FullScale => FULL_SCALE,
    };
    if max == 0.0 {
        return Ok(Grid::zeros(image.rows(), image.cols()));
    }
    let t = threshold_frac * max;
    Ok(image.map(|&v| (v as f64 >= t) as u8))
}

/// Binary plane rendered back to 8 bits (on → 255) for scoring.
pub fn threshold_to_image(plane: &Grid<u8>) -> Grid<u8> {
    plane.map(|&v| if v != 0 { 255 } else { 0 })
}

/// Binarizes every grayscale image of a dataset.
pub fn binarize_dataset(images: &[Image8], threshold_frac: f64) -> Result<Vec<Grid<u8>>> {
    images
        .iter()
        .map(|im| binarize_gray(im.gray()?, threshold_frac))
        .collect()
}

/// `levels` planes per channel at thresholds `j / (levels + 1)` of full scale.
pub fn quantize(image: &Image8, levels: usize) -> Result<BitPlaneStack> {
    if levels == 0 {
        return Err(Error::InvalidArgument("quantization needs at least one level".into()));
    }
    let thresholds_frac: Vec<f64> = (1..=levels).map(|j| j as f64 / (levels + 1) as f64).collect();
    let mut planes = Vec::with_capacity(levels * image.channels());
    let mut thresholds = Vec::with_capacity(planes.capacity());
    let mut channel_of_plane = Vec::with_capacity(planes.capacity());
    for (ch, chan) in image.planes().iter().enumerate() {
        for &t in &thresholds_frac {
            let cut = t * FULL_SCALE;
            planes.push(chan.map(|&v| (v as f64 >= cut) as u8));
            thresholds.push(t);
            channel_of_plane.push(ch);
        }
    }
    Ok(BitPlaneStack {
        planes,
        thresholds,
        channel_of_plane,
        source_shape: (image.rows(), image.cols(), image.channels()),
        levels,
    })
}

pub fn quantize_rgb(image: &Image8, levels: usize) -> Result<BitPlaneStack> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "RGB quantization needs 3 channels, got {}",
            image.channels()
        )));
    }
    quantize(image, levels)
}

/// Per channel: `255 × (number of set planes) / (levels + 1)`, rounded.
pub fn recombine(stack: &BitPlaneStack) -> Image8 {
    let (rows, cols, channels) = stack.source_shape;
    let denom = (stack.levels + 1) as f64;
    let planes = (0..channels)
        .map(|ch| {
            let mut count = Grid::<u32>::zeros(rows, cols);
            for p in stack.planes_of_channel(ch) {
                for (c, &b) in count.as_mut_slice().iter_mut().zip(p.iter()) {
                    *c += b as u32;
                }
            }
            count.map(|&n| (FULL_SCALE * n as f64 / denom).round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    Image8::from_planes(planes).expect("planes share the source shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> u8) -> Image8 {
        Image8::from_planes(vec![Grid::from_fn(rows, cols, f)]).unwrap()
    }

    #[test]
    fn threshold_relative_to_image_max() {
        let img = Grid::from_vec(1, 4, vec![0u8, 159, 160, 200]).unwrap();
        let b = binarize_gray(&img, 0.8).unwrap();
        assert_eq!(b.as_slice(), &[0, 0, 1, 1]);
        let fs = binarize_gray_with(&img, 0.8, ThresholdReference::FullScale).unwrap();
        assert_eq!(fs.as_slice(), &[0, 0, 0, 0]);
    }

    #[test]
    fn degenerate_binarizations() {
        let zero = Grid::<u8>::zeros(3, 3);
        assert!(binarize_gray(&zero, 0.8).unwrap().iter().all(|&v| v == 0));
        let full = Grid::filled(3, 3, 255u8);
        assert!(binarize_gray(&full, 0.8).unwrap().iter().all(|&v| v == 1));
        assert!(binarize_gray(&Grid::<u8>::zeros(0, 0), 0.8).is_err());
        assert!(binarize_gray(&full, 1.0).is_err());
    }

    #[test]
    fn rgb_four_levels_gives_twelve_planes() {
        let img = Image8::from_planes(vec![
            Grid::filled(4, 4, 255u8),
            Grid::filled(4, 4, 10u8),
            Grid::filled(4, 4, 128u8),
        ])
        .unwrap();
        let s = quantize_rgb(&img, 4).unwrap();
        assert_eq!(s.planes.len(), 12);
        assert!(s.planes_of_channel(0).all(|p| p.iter().all(|&v| v == 1)));
        assert_eq!(s.thresholds[..4], [0.2, 0.4, 0.6, 0.8]);
        assert!(quantize_rgb(&img, 0).is_err());
        assert!(quantize_rgb(&gray(2, 2, |_, _| 0), 4).is_err());
    }

    #[test]
    fn single_level_grey_as_rgb() {
        let g = Grid::from_fn(4, 4, |r, c| (r * 60 + c * 3) as u8);
        let img = Image8::from_planes(vec![g.clone(), g.clone(), g]).unwrap();
        let s = quantize_rgb(&img, 1).unwrap();
        assert_eq!(s.planes.len(), 3);
        assert!(s.thresholds.iter().all(|&t| t == 0.5));
        assert_eq!(s.planes[0], s.planes[1]);
        assert_eq!(s.planes[1], s.planes[2]);
    }

    #[test]
    fn recombine_values() {
        let zero = quantize(&gray(2, 2, |_, _| 0), 4).unwrap();
        assert!(recombine(&zero).gray().unwrap().iter().all(|&v| v == 0));
        let full = quantize(&gray(2, 2, |_, _| 255), 4).unwrap();
        assert!(recombine(&full).gray().unwrap().iter().all(|&v| v == 204));
    }

    #[test]
    fn ramp_reconstruction_error_bound() {
        let ramp = gray(1, 256, |_, c| c as u8);
        for levels in [1usize, 2, 3, 4, 8] {
            let rec = recombine(&quantize(&ramp, levels).unwrap());
            let bound = 255.0 / (levels + 1) as f64 + 1.0;
            for (a, b) in ramp.gray().unwrap().iter().zip(rec.gray().unwrap().iter()) {
                assert!((*a as f64 - *b as f64).abs() <= bound, "levels {levels}: {a} vs {b}");
            }
        }
    }
}
