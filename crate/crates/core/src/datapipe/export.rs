//! Bit-plane stacks on disk: every plane as a P4 bitmap, all concatenated in
//! one file, with a JSON manifest next to it (`<file>.json`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::quantize::BitPlaneStack;
use crate::optics::export::sidecar_path;
use crate::{Error, Grid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneManifest {
    pub images: usize,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub levels: usize,
    pub planes_per_image: usize,
    /// Threshold of each plane within one image, as a fraction of full scale.
    pub thresholds: Vec<f64>,
    pub channel_of_plane: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ssim: Option<f64>,
}

fn p4_bytes(plane: &Grid<u8>, out: &mut Vec<u8>) {
    out.extend_from_slice(format!("P4\n{} {}\n", plane.cols(), plane.rows()).as_bytes());
    for r in 0..plane.rows() {
        for chunk in plane.row(r).chunks(8) {
            let mut byte = 0u8;
            for (i, &v) in chunk.iter().enumerate() {
                if v != 0 {
                    byte |= 0x80 >> i;
                }
            }
            out.push(byte);
        }
    }
}

/// Writes the planes of all stacks (which must share one geometry) and returns the manifest.
pub fn write_stacks(
    path: &Path,
    stacks: &[BitPlaneStack],
    labels: Option<&[u8]>,
    mean_ssim: Option<f64>,
) -> Result<PlaneManifest> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to export".into()))?;
    if let Some(s) = stacks
        .iter()
        .find(|s| s.source_shape != first.source_shape || s.thresholds != first.thresholds)
    {
        return Err(Error::DimensionMismatch {
            expected: (first.source_shape.0, first.source_shape.1),
            found: (s.source_shape.0, s.source_shape.1),
        });
    }
    if labels.is_some_and(|l| l.len() != stacks.len()) {
        return Err(Error::InvalidArgument("one label per exported image required".into()));
    }
    let mut bytes = Vec::new();
    for s in stacks {
        for p in &s.planes {
            p4_bytes(p, &mut bytes);
        }
    }
    fs::write(path, bytes)?;
    let (rows, cols, channels) = first.source_shape;
    let manifest = PlaneManifest {
        images: stacks.len(),
        rows,
        cols,
        channels,
        levels: first.levels,
        planes_per_image: first.planes.len(),
        thresholds: first.thresholds.clone(),
        channel_of_plane: first.channel_of_plane.clone(),
        labels: labels.map(<[u8]>::to_vec),
        mean_ssim,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Reads back what [`write_stacks`] produced.
pub fn read_stacks(path: &Path) -> Result<(PlaneManifest, Vec<BitPlaneStack>)> {
    let side = sidecar_path(path);
    let manifest: PlaneManifest = serde_json::from_str(&fs::read_to_string(&side)?)
        .map_err(|e| Error::format(&side, e.column() as u64, e.to_string()))?;
    let bytes = fs::read(path)?;
    let header = format!("P4\n{} {}\n", manifest.cols, manifest.rows).into_bytes();
    let row_bytes = manifest.cols.div_ceil(8);
    let plane_len = header.len() + row_bytes * manifest.rows;
    let expected = plane_len * manifest.planes_per_image * manifest.images;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("expected {expected} bytes"),
        ));
    }
    let mut planes = bytes.chunks_exact(plane_len).enumerate().map(|(i, chunk)| {
        if chunk[..header.len()] != header[..] {
            return Err(Error::format(path, (i * plane_len) as u64, "bad P4 header"));
        }
        let body = &chunk[header.len()..];
        Ok(Grid::from_fn(manifest.rows, manifest.cols, |r, c| {
            (body[r * row_bytes + c / 8] >> (7 - c % 8)) & 1
        }))
    });
    let mut stacks = Vec::with_capacity(manifest.images);
    for _ in 0..manifest.images {
        let planes = planes
            .by_ref()
            .take(manifest.planes_per_image)
            .collect::<Result<Vec<_>>>()?;
        stacks.push(BitPlaneStack {
            planes,
            thresholds: manifest.thresholds.clone(),
            channel_of_plane: manifest.channel_of_plane.clone(),
            source_shape: (manifest.rows, manifest.cols, manifest.channels),
            levels: manifest.levels,
        });
    }
    Ok((manifest, stacks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{quantize, Image8};

    #[test]
    fn round_trip_odd_width() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("planes.pbm");
        let stacks: Vec<_> = (0..3)
            .map(|k| {
                let chans = (0..3)
                    .map(|ch| Grid::from_fn(5, 11, |r, c| ((r * 31 + c * 17 + k * 7 + ch * 50) % 256) as u8))
                    .collect();
                quantize(&Image8::from_planes(chans).unwrap(), 4).unwrap()
            })
            .collect();
        let m = write_stacks(&p, &stacks, Some(&[1, 2, 3]), Some(0.5)).unwrap();
        assert_eq!(m.planes_per_image, 12);
        let (m2, back) = read_stacks(&p).unwrap();
        assert_eq!(m2, m);
        assert_eq!(back, stacks);
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P4\n11 5\n"));
    }

    #[test]
    fn truncated_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("planes.pbm");
        let img = Image8::from_planes(vec![Grid::filled(8, 8, 200u8)]).unwrap();
        write_stacks(&p, &[quantize(&img, 2).unwrap()], None, None).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_stacks(&p), Err(Error::Format { .. })));
    }
}
