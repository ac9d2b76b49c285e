//! Single-file checkpoints: `DCNNCKPT`, a little-endian `u32` header length,
//! a JSON header, then every tensor as little-endian `f64` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Architecture, Dense, ModelParams};
use crate::{Error, Grid, Result};

const MAGIC: &[u8; 8] = b"DCNNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub grid: usize,
    pub image: (usize, usize),
    pub kernels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub highpass: bool,
    pub seed: u64,
    /// 1 after kernel training, 2 after head fine-tuning.
    pub stage: u8,
    /// `(name, element count)` of each tensor, in file order.
    pub tensors: Vec<(String, usize)>,
}

fn tensors(p: &ModelParams) -> Vec<(String, &[f64])> {
    let mut t: Vec<(String, &[f64])> = p
        .kernels
        .iter()
        .enumerate()
        .map(|(i, k)| (format!("kernel.{i}"), k.as_slice()))
        .collect();
    t.push(("fc1.weight".into(), &p.fc1.weights));
    t.push(("fc1.bias".into(), &p.fc1.bias));
    t.push(("fc2.weight".into(), &p.fc2.weights));
    t.push(("fc2.bias".into(), &p.fc2.bias));
    t
}

pub fn encode_checkpoint(params: &ModelParams, seed: u64, stage: u8) -> Result<Vec<u8>> {
    params.check_consistent()?;
    let ts = tensors(params);
    let a = params.arch;
    let header = CheckpointHeader {
        version: VERSION,
        grid: a.grid,
        image: a.image,
        kernels: a.kernels,
        hidden: a.hidden,
        classes: a.classes,
        highpass: params.highpass,
        seed,
        stage,
        tensors: ts.iter().map(|(n, v)| (n.clone(), v.len())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + ts.iter().map(|t| t.1.len() * 8).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, v) in ts {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, seed: u64, stage: u8) -> Result<()> {
    fs::write(path, encode_checkpoint(params, seed, stage)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let bytes = fs::read(path)?;
    let bad = |offset: usize, msg: &str| Error::format(path, offset as u64, msg);
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad(0, "not a checkpoint (bad magic)"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = 12 + hlen;
    if bytes.len() < body {
        return Err(bad(bytes.len(), "truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[12..body]).map_err(|e| bad(12, &format!("bad header: {e}")))?;
    if header.version != VERSION {
        return Err(bad(12, &format!("unsupported version {}", header.version)));
    }
    let arch = Architecture {
        grid: header.grid,
        image: header.image,
        kernels: header.kernels,
        hidden: header.hidden,
        classes: header.classes,
    };
    arch.validate()?;
    let total: usize = header.tensors.iter().map(|t| t.1).sum();
    if bytes.len() != body + total * 8 {
        return Err(bad(
            bytes.len(),
            &format!("expected {} bytes of tensor data", total * 8),
        ));
    }
    let mut values = bytes[body..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |name: &str, n: usize| -> Result<Vec<f64>> {
        Ok(values.by_ref().take(n).collect::<Vec<_>>()).and_then(|v| {
            if v.len() == n {
                Ok(v)
            } else {
                Err(bad(body, &format!("tensor {name} is short")))
            }
        })
    };
    let g = arch.grid;
    let f = arch.feature_len();
    let expected: Vec<(String, usize)> = (0..arch.kernels)
        .map(|i| (format!("kernel.{i}"), g * g))
        .chain([
            ("fc1.weight".to_string(), f * arch.hidden),
            ("fc1.bias".to_string(), arch.hidden),
            ("fc2.weight".to_string(), arch.hidden * arch.classes),
            ("fc2.bias".to_string(), arch.classes),
        ])
        .collect();
    if header.tensors != expected {
        return Err(bad(12, "tensor list does not match the declared architecture"));
    }
    let kernels = (0..arch.kernels)
        .map(|i| Grid::from_vec(g, g, take(&format!("kernel.{i}"), g * g)?))
        .collect::<Result<Vec<_>>>()?;
    let fc1 = Dense {
        inputs: f,
        outputs: arch.hidden,
        weights: take("fc1.weight", f * arch.hidden)?,
        bias: take("fc1.bias", arch.hidden)?,
    };
    let fc2 = Dense {
        inputs: arch.hidden,
        outputs: arch.classes,
        weights: take("fc2.weight", arch.hidden * arch.classes)?,
        bias: take("fc2.bias", arch.classes)?,
    };
    let params = ModelParams {
        arch,
        kernels,
        fc1,
        fc2,
        highpass: header.highpass,
    };
    Ok((params, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        let arch = Architecture {
            grid: 8,
            image: (4, 4),
            kernels: 2,
            hidden: 5,
            classes: 3,
        };
        ModelParams::init(arch, true, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let params = small();
        save_checkpoint(&p, &params, 3, 1).unwrap();
        let (back, header) = load_checkpoint(&p).unwrap();
        assert_eq!(back, params);
        assert_eq!((header.seed, header.stage), (3, 1));
        assert_eq!(fs::read(&p).unwrap(), encode_checkpoint(&back, 3, 1).unwrap());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let mut bytes = encode_checkpoint(&small(), 0, 1).unwrap();
        bytes.pop();
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format { .. })));
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format { offset: 0, .. })));
    }
}
