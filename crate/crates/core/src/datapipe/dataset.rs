use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Grid, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

/// 8-bit image stored as one grid per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image8 {
    planes: Vec<Grid<u8>>,
}

impl Image8 {
    pub fn from_planes(planes: Vec<Grid<u8>>) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("image needs at least one channel".into()))?
            .shape();
        if let Some(p) = planes.iter().find(|p| p.shape() != first) {
            return Err(Error::DimensionMismatch {
                expected: first,
                found: p.shape(),
            });
        }
        Ok(Image8 { planes })
    }

    pub fn gray(&self) -> Result<&Grid<u8>> {
        match self.planes.as_slice() {
            [g] => Ok(g),
            _ => Err(Error::InvalidArgument(format!(
                "expected a grayscale image, got {} channels",
                self.planes.len()
            ))),
        }
    }

    pub fn planes(&self) -> &[Grid<u8>] {
        &self.planes
    }

    pub fn rows(&self) -> usize {
        self.planes[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.planes[0].cols()
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Mnist,
    Quickdraw,
    Cifar10,
}

impl DatasetKind {
    /// `(rows, cols, channels)` of one sample.
    pub fn geometry(self) -> (usize, usize, usize) {
        match self {
            DatasetKind::Mnist | DatasetKind::Quickdraw => (28, 28, 1),
            DatasetKind::Cifar10 => (CIFAR_SIDE, CIFAR_SIDE, 3),
        }
    }

    /// Images per DMD frame in the tiled optical setup.
    pub fn tiles_per_frame(self) -> (usize, usize) {
        match self {
            DatasetKind::Mnist | DatasetKind::Quickdraw => (7, 7),
            DatasetKind::Cifar10 => (5, 5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub images: Vec<Image8>,
    pub labels: Vec<u8>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            kind: self.kind,
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            n_classes: self.n_classes,
        }
    }

    /// Samples whose label is in `classes`, relabelled to their index in `classes`.
    pub fn filter_classes(&self, classes: &[u8]) -> Dataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (im, &l) in self.images.iter().zip(&self.labels) {
            if let Some(pos) = classes.iter().position(|&c| c == l) {
                images.push(im.clone());
                labels.push(pos as u8);
            }
        }
        Dataset {
            kind: self.kind,
            images,
            labels,
            n_classes: classes.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.path,
                self.bytes.len() as u64,
                format!("truncated file: needed {n} more bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Reads an IDX3 unsigned-byte image file (big-endian header, magic 0x803).
pub fn load_idx_images(path: &Path) -> Result<Vec<Grid<u8>>> {
    let bytes = fs::read(path)?;
    let mut rd = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let magic = rd.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(path, 0, format!("bad IDX image magic {magic:#010x}")));
    }
    let n = rd.u32_be()? as usize;
    let rows = rd.u32_be()? as usize;
    let cols = rd.u32_be()? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("IDX image file should be {expected} bytes"),
        ));
    }
    (0..n)
        .map(|_| Grid::from_vec(rows, cols, rd.take(rows * cols)?.to_vec()))
        .collect()
}

/// Reads an IDX1 label file (magic 0x801).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let mut rd = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    let magic = rd.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(path, 0, format!("bad IDX label magic {magic:#010x}")));
    }
    let n = rd.u32_be()? as usize;
    Ok(rd.take(n)?.to_vec())
}

fn load_idx_pair(images: &Path, labels: &Path, kind: DatasetKind, n_classes: usize) -> Result<Dataset> {
    let imgs = load_idx_images(images)?;
    let labs = load_idx_labels(labels)?;
    if imgs.len() != labs.len() {
        return Err(Error::format(
            labels,
            4,
            format!("{} labels for {} images", labs.len(), imgs.len()),
        ));
    }
    if let Some(i) = labs.iter().position(|&l| l as usize >= n_classes) {
        return Err(Error::format(
            labels,
            8 + i as u64,
            format!("label {} out of range", labs[i]),
        ));
    }
    Ok(Dataset {
        kind,
        images: imgs.into_iter().map(|g| Image8 { planes: vec![g] }).collect(),
        labels: labs,
        n_classes,
    })
}

fn load_idx_split(dir: &Path, kind: DatasetKind, n_classes: usize) -> Result<Split> {
    Ok(Split {
        train: load_idx_pair(
            &dir.join("train-images-idx3-ubyte"),
            &dir.join("train-labels-idx1-ubyte"),
            kind,
            n_classes,
        )?,
        test: load_idx_pair(
            &dir.join("t10k-images-idx3-ubyte"),
            &dir.join("t10k-labels-idx1-ubyte"),
            kind,
            n_classes,
        )?,
    })
}

/// Standard MNIST directory with the four uncompressed IDX files.
pub fn load_mnist(dir: &Path) -> Result<Split> {
    load_idx_split(dir, DatasetKind::Mnist, 10)
}

/// Quickdraw 28×28 bitmaps exported to the MNIST IDX file layout.
pub fn load_quickdraw(dir: &Path) -> Result<Split> {
    let split = load_idx_split(dir, DatasetKind::Quickdraw, 256)?;
    let n_classes = split
        .train
        .labels
        .iter()
        .chain(&split.test.labels)
        .max()
        .map_or(0, |&m| m as usize + 1);
    let fix = |d: Dataset| Dataset { n_classes, ..d };
    Ok(Split {
        train: fix(split.train),
        test: fix(split.test),
    })
}

/// One CIFAR-10 binary batch: records of 1 label byte + 1024 R + 1024 G + 1024 B.
pub fn load_cifar10_batch(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!("size is not a multiple of the {CIFAR_RECORD}-byte record"),
        ));
    }
    let side = CIFAR_SIDE * CIFAR_SIDE;
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(images.capacity());
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::format(
                path,
                (i * CIFAR_RECORD) as u64,
                format!("label {} out of range", rec[0]),
            ));
        }
        labels.push(rec[0]);
        let planes = (0..3)
            .map(|ch| Grid::from_vec(CIFAR_SIDE, CIFAR_SIDE, rec[1 + ch * side..1 + (ch + 1) * side].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        images.push(Image8 { planes });
    }
    Ok(Dataset {
        kind: DatasetKind::Cifar10,
        images,
        labels,
        n_classes: 10,
    })
}

/// `data_batch_1.bin` to `data_batch_5.bin` and `test_batch.bin`.
pub fn load_cifar10(dir: &Path) -> Result<Split> {
    let mut train = load_cifar10_batch(&dir.join("data_batch_1.bin"))?;
    for i in 2..=5 {
        let b = load_cifar10_batch(&dir.join(format!("data_batch_{i}.bin")))?;
        train.images.extend(b.images);
        train.labels.extend(b.labels);
    }
    Ok(Split {
        train,
        test: load_cifar10_batch(&dir.join("test_batch.bin"))?,
    })
}
