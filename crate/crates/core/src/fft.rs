//! Unitary 2D discrete Fourier transforms on row-major complex buffers.
//!
//! Both directions carry a `1/sqrt(rows * cols)` factor, so a forward
//! transform followed by an inverse one is the identity and Parseval holds
//! without extra bookkeeping. Spectra are stored in DFT order (DC at index
//! `(0, 0)`); [`centered_to_dft`] and [`dft_to_centered`] convert between that
//! order and the optical, DC-at-center layout used by Fourier-plane masks.
//!
//! The pruned variants skip row transforms on rows known to be zero (input
//! side) or rows that are never read (output side). The network uses them
//! because a 28×28 image embedded in a 256×256 grid touches a small band of
//! rows on both ends of the 4f path.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Grid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Planned 2D transform for a fixed `rows × cols` shape.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

/// Reusable work buffers for one thread.
#[derive(Debug, Default)]
pub struct Scratch {
    transposed: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("transform shape must be non-empty".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            scale: 1.0 / ((rows * cols) as f64).sqrt(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transform(&self, buf: &mut [Complex64], dir: Direction, scratch: &mut Scratch) {
        self.transform_input_pruned(buf, dir, 0..self.rows, scratch);
    }

    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut Scratch) {
        self.transform(buf, Direction::Forward, scratch);
    }

    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut Scratch) {
        self.transform(buf, Direction::Inverse, scratch);
    }

    fn plans(&self, dir: Direction) -> (&Arc<dyn Fft<f64>>, &Arc<dyn Fft<f64>>) {
        match dir {
            Direction::Forward => (&self.row_fwd, &self.col_fwd),
            Direction::Inverse => (&self.row_inv, &self.col_inv),
        }
    }

    fn prepare(&self, buf: &[Complex64], dir: Direction, scratch: &mut Scratch) -> usize {
        assert_eq!(buf.len(), self.rows * self.cols, "buffer does not match planned shape");
        let (row_plan, col_plan) = self.plans(dir);
        let need = row_plan
            .get_inplace_scratch_len()
            .max(col_plan.get_inplace_scratch_len());
        if scratch.fft.len() < need {
            scratch.fft.resize(need, Complex64::default());
        }
        if scratch.transposed.len() < buf.len() {
            scratch.transposed.resize(buf.len(), Complex64::default());
        }
        need
    }

    fn column_pass(&self, buf: &mut [Complex64], dir: Direction, scratch: &mut Scratch, need: usize) {
        let (rows, cols) = (self.rows, self.cols);
        let (_, col_plan) = self.plans(dir);
        let t = &mut scratch.transposed[..rows * cols];
        transpose(buf, t, rows, cols);
        col_plan.process_with_scratch(t, &mut scratch.fft[..need]);
        transpose(t, buf, cols, rows);
    }

    /// Transform that assumes every row outside `nonzero_rows` is zero.
    pub fn transform_input_pruned(
        &self,
        buf: &mut [Complex64],
        dir: Direction,
        nonzero_rows: Range<usize>,
        scratch: &mut Scratch,
    ) {
        let need = self.prepare(buf, dir, scratch);
        assert!(nonzero_rows.end <= self.rows);
        let (row_plan, _) = self.plans(dir);
        let cols = self.cols;
        if !nonzero_rows.is_empty() {
            let band = &mut buf[nonzero_rows.start * cols..nonzero_rows.end * cols];
            row_plan.process_with_scratch(band, &mut scratch.fft[..need]);
        }
        self.column_pass(buf, dir, scratch, need);
        let s = self.scale;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// Column pass on every column, then the row pass only on `needed_rows`.
    /// Rows outside `needed_rows` are left holding intermediate values.
    pub fn transform_output_pruned(
        &self,
        buf: &mut [Complex64],
        dir: Direction,
        needed_rows: Range<usize>,
        scratch: &mut Scratch,
    ) {
        let need = self.prepare(buf, dir, scratch);
        assert!(needed_rows.end <= self.rows);
        self.column_pass(buf, dir, scratch, need);
        if !needed_rows.is_empty() {
            let (row_plan, _) = self.plans(dir);
            let cols = self.cols;
            let band = &mut buf[needed_rows.start * cols..needed_rows.end * cols];
            row_plan.process_with_scratch(band, &mut scratch.fft[..need]);
            let s = self.scale;
            for v in band.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Convenience wrapper for a whole grid.
    pub fn transform_grid(&self, grid: &Grid<Complex64>, dir: Direction) -> Result<Grid<Complex64>> {
        grid.ensure_shape((self.rows, self.cols))?;
        let mut out = grid.clone();
        self.transform(out.as_mut_slice(), dir, &mut Scratch::default());
        Ok(out)
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Index in DFT order of the sample stored at centered position `c` along an
/// axis of length `n`.
#[inline]
pub fn centered_to_dft(c: usize, n: usize) -> usize {
    (c + n - n / 2) % n
}

/// Centered position of DFT index `k` along an axis of length `n`.
#[inline]
pub fn dft_to_centered(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Reorders a centered (DC in the middle) grid into DFT order.
pub fn ifftshift<T: Clone + Default>(g: &Grid<T>) -> Grid<T> {
    let (rows, cols) = g.shape();
    Grid::from_fn(rows, cols, |r, c| {
        g[(dft_to_centered(r, rows), dft_to_centered(c, cols))].clone()
    })
}

/// Reorders a DFT-ordered grid so that DC sits at `(rows/2, cols/2)`.
pub fn fftshift<T: Clone + Default>(g: &Grid<T>) -> Grid<T> {
    let (rows, cols) = g.shape();
    Grid::from_fn(rows, cols, |r, c| {
        g[(centered_to_dft(r, rows), centered_to_dft(c, cols))].clone()
    })
}
