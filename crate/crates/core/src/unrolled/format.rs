//! Binary parameter files.
//!
//! Layout: the 8-byte magic `MCTPARAM`, a little-endian `u32` header length,
//! the JSON [`ParamsHeader`], then `num_params` little-endian `f64` values in
//! [`NetworkParams::to_flat`] order. When the header carries `adam_step`,
//! the Adam first and second moments follow, `num_params` values each.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerParams, NetworkParams};
use crate::error::{Error, Result};
use crate::geometry::AngleSet;
use crate::grad::AdamState;
use crate::masks::{build_mask, MaskKind};
use crate::wavelet::num_subbands;
use crate::Real;

const MAGIC: &[u8; 8] = b"MCTPARAM";
pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub format_version: u32,
    pub blocks: usize,
    pub patch: usize,
    pub mask: MaskKind,
    pub q: usize,
    pub levels: usize,
    pub side: usize,
    pub angle_set: AngleSet,
    pub operator_hash: String,
    pub num_params: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_step: Option<u64>,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptCheckpoint {
        file: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn save_params<T: Real>(path: &Path, params: &NetworkParams<T>, adam: Option<&AdamState>) -> Result<()> {
    let flat = params.to_flat();
    if let Some(a) = adam {
        if a.m.len() != flat.len() || a.v.len() != flat.len() {
            return Err(Error::invalid("optimizer state does not match the parameter count"));
        }
    }
    let header = ParamsHeader {
        format_version: PARAMS_FORMAT_VERSION,
        blocks: params.blocks(),
        patch: params.patch_size(),
        mask: params.mask.kind(),
        q: params.mask.q(),
        levels: params.levels,
        side: params.side,
        angle_set: params.angle_set.clone(),
        operator_hash: params.operator_hash.clone(),
        num_params: flat.len(),
        adam_step: adam.map(|a| a.t),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let extra = if adam.is_some() { 2 } else { 0 };
    let mut bytes = Vec::with_capacity(12 + json.len() + 8 * flat.len() * (1 + extra));
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in &flat {
        bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    if let Some(a) = adam {
        for v in a.m.iter().chain(&a.v) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    // write-then-rename so an interrupted save never clobbers a good file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_header(path: &Path) -> Result<(ParamsHeader, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "missing parameter-file magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + hlen {
        return Err(corrupt(path, "truncated header"));
    }
    let header: ParamsHeader = serde_json::from_slice(&bytes[12..12 + hlen]).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    if header.format_version != PARAMS_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: header.format_version,
            supported: PARAMS_FORMAT_VERSION,
        });
    }
    Ok((header, bytes[12 + hlen..].to_vec()))
}

pub fn load_params(path: &Path) -> Result<(NetworkParams<f64>, Option<AdamState>)> {
    let (h, payload) = read_header(path)?;
    let q = num_subbands(h.levels);
    let per_layer = 3 + q * q * h.patch * h.patch;
    if h.num_params != h.blocks * per_layer {
        return Err(corrupt(path, "parameter count disagrees with the header shape"));
    }
    let blocks = if h.adam_step.is_some() { 3 } else { 1 };
    if payload.len() != 8 * h.num_params * blocks {
        return Err(corrupt(
            path,
            format!("expected {} payload bytes, found {}", 8 * h.num_params * blocks, payload.len()),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mask = build_mask(h.mask, &h.angle_set, h.patch, h.q).map_err(|e| corrupt(path, e.to_string()))?;
    let mut params = NetworkParams {
        layers: vec![LayerParams::zeros(q, h.patch); h.blocks],
        mask,
        angle_set: h.angle_set.clone(),
        side: h.side,
        levels: h.levels,
        operator_hash: h.operator_hash.clone(),
    };
    params.set_flat(&values[..h.num_params])?;
    params.validate().map_err(|e| corrupt(path, e.to_string()))?;
    let adam = h.adam_step.map(|t| AdamState {
        t,
        m: values[h.num_params..2 * h.num_params].to_vec(),
        v: values[2 * h.num_params..].to_vec(),
    });
    Ok((params, adam))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NetworkParams<f64> {
        let a = AngleSet::limited(0.9).unwrap();
        let mask = build_mask(MaskKind::Bow, &a, 3, 1).unwrap();
        let mut p = NetworkParams::ista_init(2, mask, a, 8, 1, 0.05, "abc").unwrap();
        let flat: Vec<f64> = (0..p.num_params()).map(|i| (i as f64).sin()).collect();
        p.set_flat(&flat).unwrap();
        p
    }

    #[test]
    fn round_trip_with_and_without_optimizer_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = params();
        save_params(&path, &p, None).unwrap();
        let (q, adam) = load_params(&path).unwrap();
        assert_eq!(q, p);
        assert!(adam.is_none());

        let n = p.num_params();
        let state = AdamState {
            t: 7,
            m: vec![0.5; n],
            v: vec![0.25; n],
        };
        save_params(&path, &p, Some(&state)).unwrap();
        let (q, adam) = load_params(&path).unwrap();
        assert_eq!(q, p);
        assert_eq!(adam.unwrap(), state);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_params(&path, &params(), None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_params(&path), Err(Error::CorruptCheckpoint { .. })));
        fs::write(&path, b"nonsense").unwrap();
        assert!(load_params(&path).unwrap_err().is_integrity_failure());
    }
}
