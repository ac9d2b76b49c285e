use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Grid, Result};

/// Complex optical field sampled on a square-pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPlane {
    amplitude: Grid<Complex64>,
    pitch_m: f64,
}

impl FieldPlane {
    pub fn new(amplitude: Grid<Complex64>, pitch_m: f64) -> Result<Self> {
        if !(pitch_m.is_finite() && pitch_m > 0.0) {
            return Err(Error::InvalidArgument(format!("pitch must be positive, got {pitch_m}")));
        }
        if amplitude.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("field contains non-finite values".into()));
        }
        Ok(FieldPlane { amplitude, pitch_m })
    }

    /// Binary amplitude modulation of a plane wave by a DMD frame.
    pub fn from_binary(frame: &Grid<u8>, pitch_m: f64) -> Result<Self> {
        if frame.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("DMD frame must be binary (0/1)".into()));
        }
        Self::new(frame.map(|&v| Complex64::new(v as f64, 0.0)), pitch_m)
    }

    /// Binary frame zero-padded to `rows × cols`, centred.
    pub fn from_binary_padded(frame: &Grid<u8>, rows: usize, cols: usize, pitch_m: f64) -> Result<Self> {
        if frame.rows() > rows || frame.cols() > cols {
            return Err(Error::FrameOverflow {
                needed: frame.shape(),
                frame: (rows, cols),
            });
        }
        let mut padded = Grid::<u8>::zeros(rows, cols);
        padded.paste(frame, (rows - frame.rows()) / 2, (cols - frame.cols()) / 2);
        Self::from_binary(&padded, pitch_m)
    }

    pub fn amplitude(&self) -> &Grid<Complex64> {
        &self.amplitude
    }

    pub fn pitch_m(&self) -> f64 {
        self.pitch_m
    }

    pub fn shape(&self) -> (usize, usize) {
        self.amplitude.shape()
    }

    pub fn intensity(&self) -> Grid<f64> {
        self.amplitude.map(|v| v.norm_sqr())
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Rect { row, col, rows, cols }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.rows && c >= self.col && c < self.col + self.cols
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.row < other.row + other.rows
            && other.row < self.row + self.rows
            && self.col < other.col + other.cols
            && other.col < self.col + self.cols
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        if !self.overlaps(other) {
            return None;
        }
        let row = self.row.max(other.row);
        let col = self.col.max(other.col);
        let end_r = (self.row + self.rows).min(other.row + other.rows);
        let end_c = (self.col + self.cols).min(other.col + other.cols);
        Some(Rect::new(row, col, end_r - row, end_c - col))
    }
}

/// Side-by-side Fourier windows, one per diffraction order, in the extended
/// Fourier plane on DMD#2. Window coordinates are centred (DC in the middle).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowLayout {
    pub rows: usize,
    pub cols: usize,
    pub min_order: i32,
    pub max_order: i32,
}

impl WindowLayout {
    pub fn spanning(orders: &[i32], rows: usize, cols: usize) -> Result<Self> {
        let min_order = *orders
            .iter()
            .min()
            .ok_or_else(|| Error::InvalidArgument("at least one kernel is required".into()))?;
        let max_order = *orders.iter().max().expect("non-empty");
        Ok(WindowLayout {
            rows,
            cols,
            min_order,
            max_order,
        })
    }

    pub fn window_count(&self) -> usize {
        (self.max_order - self.min_order + 1) as usize
    }

    pub fn extended_shape(&self) -> (usize, usize) {
        (self.rows, self.cols * self.window_count())
    }

    pub fn window(&self, order: i32) -> Rect {
        assert!(order >= self.min_order && order <= self.max_order);
        Rect::new(0, (order - self.min_order) as usize * self.cols, self.rows, self.cols)
    }
}

/// Binary aperture over the extended Fourier plane; one open region per
/// kernel output.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureMask {
    rows: usize,
    cols: usize,
    open_regions: Vec<Rect>,
}

impl ApertureMask {
    pub fn new(rows: usize, cols: usize, open_regions: Vec<Rect>) -> Result<Self> {
        for r in &open_regions {
            if r.rows == 0 || r.cols == 0 || r.row + r.rows > rows || r.col + r.cols > cols {
                return Err(Error::InvalidArgument(format!(
                    "aperture region {r:?} outside {rows}x{cols} plane"
                )));
            }
        }
        for i in 0..open_regions.len() {
            for j in i + 1..open_regions.len() {
                if open_regions[i].overlaps(&open_regions[j]) {
                    return Err(Error::CrosstalkNotBlocked(i, j));
                }
            }
        }
        Ok(ApertureMask {
            rows,
            cols,
            open_regions,
        })
    }

    /// Opens exactly the Fourier window of each listed order, in list order.
    pub fn ideal(layout: &WindowLayout, orders: &[i32]) -> Result<Self> {
        let (rows, cols) = layout.extended_shape();
        Self::new(rows, cols, orders.iter().map(|&o| layout.window(o)).collect())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn open_regions(&self) -> &[Rect] {
        &self.open_regions
    }

    pub fn mask(&self) -> Grid<u8> {
        Grid::from_fn(self.rows, self.cols, |r, c| {
            self.open_regions.iter().any(|reg| reg.contains(r, c)) as u8
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_matches_regions() {
        let m = ApertureMask::new(4, 8, vec![Rect::new(0, 0, 4, 4), Rect::new(1, 5, 2, 2)]).unwrap();
        let g = m.mask();
        assert_eq!(g.iter().map(|&v| v as usize).sum::<usize>(), 16 + 4);
        assert_eq!(g[(0, 5)], 0);
        assert_eq!(g[(1, 5)], 1);
    }

    #[test]
    fn overlapping_regions_are_crosstalk() {
        let err = ApertureMask::new(4, 8, vec![Rect::new(0, 0, 4, 5), Rect::new(0, 4, 4, 4)]).unwrap_err();
        assert!(matches!(err, Error::CrosstalkNotBlocked(0, 1)));
    }

    #[test]
    fn window_layout_positions() {
        let l = WindowLayout::spanning(&[1, -1, 0], 8, 8).unwrap();
        assert_eq!(l.window_count(), 3);
        assert_eq!(l.window(-1).col, 0);
        assert_eq!(l.window(1).col, 16);
    }

    #[test]
    fn binary_field_rejects_grey() {
        let g = Grid::from_vec(1, 2, vec![0u8, 2]).unwrap();
        assert!(FieldPlane::from_binary(&g, 1e-6).is_err());
    }
}
