//! Grid export: 8-bit P5 graymaps for viewing and raw little-endian `f64`
//! dumps with a one-line JSON sidecar for exact round trips.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::FieldPlane;
use crate::{Error, Grid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub width: usize,
    pub height: usize,
    pub pitch_m: f64,
    /// Present and `true` for interleaved re/im complex dumps.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub complex: bool,
}

/// Sidecar path: `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `grid` as an 8-bit binary graymap scaled so the maximum maps to 255.
pub fn write_pgm(path: &Path, grid: &Grid<f64>) -> Result<()> {
    let max = grid.max_value();
    let scale = if max > 0.0 && max.is_finite() { 255.0 / max } else { 0.0 };
    let mut out = format!("P5\n{} {}\n255\n", grid.cols(), grid.rows()).into_bytes();
    out.extend(grid.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8));
    fs::write(path, out)?;
    Ok(())
}

pub fn write_raw(path: &Path, grid: &Grid<f64>, pitch_m: f64) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.len() * 8);
    for v in grid.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    write_header(
        path,
        &RawHeader {
            width: grid.cols(),
            height: grid.rows(),
            pitch_m,
            complex: false,
        },
    )
}

pub fn read_raw(path: &Path) -> Result<(Grid<f64>, f64)> {
    let header = read_header(path)?;
    if header.complex {
        return Err(Error::format(path, 0, "complex dump, use read_field"));
    }
    let values = read_f64s(path, header.width * header.height)?;
    Ok((Grid::from_vec(header.height, header.width, values)?, header.pitch_m))
}

pub fn write_field(path: &Path, field: &FieldPlane) -> Result<()> {
    let amp = field.amplitude();
    let mut bytes = Vec::with_capacity(amp.len() * 16);
    for v in amp.iter() {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::write(path, bytes)?;
    write_header(
        path,
        &RawHeader {
            width: amp.cols(),
            height: amp.rows(),
            pitch_m: field.pitch_m(),
            complex: true,
        },
    )
}

pub fn read_field(path: &Path) -> Result<FieldPlane> {
    let header = read_header(path)?;
    if !header.complex {
        return Err(Error::format(path, 0, "real dump, use read_raw"));
    }
    let values = read_f64s(path, 2 * header.width * header.height)?;
    let data = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    FieldPlane::new(Grid::from_vec(header.height, header.width, data)?, header.pitch_m)
}

fn write_header(path: &Path, header: &RawHeader) -> Result<()> {
    let mut f = fs::File::create(sidecar_path(path))?;
    serde_json::to_writer(&mut f, header)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn read_header(path: &Path) -> Result<RawHeader> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side)?;
    serde_json::from_str(text.trim()).map_err(|e| Error::format(side, e.column() as u64, e.to_string()))
}

fn read_f64s(path: &Path, count: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != count * 8 {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("expected {} bytes of f64 data", count * 8),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}
