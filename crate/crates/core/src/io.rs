//! Flat little-endian float files, JSON files and 16-bit PNG export.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

pub fn write_f32<T: Real>(path: &Path, values: &[T]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        let x = v.to_f32().unwrap_or(f32::NAN);
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads exactly `expected` f32 values; any other length is a corrupt file.
pub fn read_f32<T: Real>(path: &Path, expected: usize) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::CorruptDataset {
            file: path.to_path_buf(),
            reason: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Min/max normalization recorded next to every PNG.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PngScaling {
    pub min: f64,
    pub max: f64,
}

/// Writes a 16-bit grayscale PNG normalized to the data's own range.
pub fn write_png16<T: Real>(path: &Path, side: usize, values: &[T]) -> Result<PngScaling> {
    let lo = values.iter().map(|v| v.to_f64_lossy()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = values
        .iter()
        .map(|v| (((v.to_f64_lossy() - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(side as u32, side as u32, pixels)
        .ok_or_else(|| Error::Encode("pixel buffer does not match image size".into()))?;
    buf.save(path).map_err(|e| Error::Encode(format!("{}: {e}", path.display())))?;
    Ok(PngScaling { min: lo, max: hi })
}

/// Writes a rectangular 16-bit grayscale PNG with a caller-chosen range.
pub fn write_png16_rect(path: &Path, width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = values
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| Error::Encode("pixel buffer does not match image size".into()))?;
    buf.save(path).map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_and_length_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.f32");
        let v = vec![1.5f64, -2.25, 0.0];
        write_f32(&p, &v).unwrap();
        assert_eq!(read_f32::<f64>(&p, 3).unwrap(), v);
        match read_f32::<f64>(&p, 4) {
            Err(Error::CorruptDataset { file, .. }) => assert_eq!(file, p),
            other => panic!("{other:?}"),
        }
    }
}
