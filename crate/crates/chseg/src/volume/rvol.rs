//! RVOL: a JSON sidecar next to a raw little-endian f32 payload.
//!
//! Sidecar schema:
//! `{"dims":[nx,ny,nz], "spacing":[sx,sy,sz], "dtype":"f32",
//!   "byte_order":"little", "raw":"<path relative to the sidecar>"}`
//! plus an optional `"domain"` tag ("raw_hu" | "normalized_unit" |
//! "phase_field", default "raw_hu") so the intensity domain survives a round
//! trip. Round trips are bit-exact for any finite payload.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::volume::{IntensityDomain, ScalarVolume};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `vol` as a sidecar at `json_path` plus a raw payload named after the
/// sidecar's file stem (`foo.rvol` -> `foo.raw`).
pub fn write_rvol(vol: &ScalarVolume, json_path: &Path) -> Result<()> {
    let stem = json_path
        .file_stem()
        .ok_or_else(|| Error::IndexOutOfRange(format!("bad rvol path {}", json_path.display())))?
        .to_string_lossy()
        .into_owned();
    let raw_name = format!("{stem}.raw");
    let raw_path = json_path.with_file_name(&raw_name);

    let (nx, ny, nz) = vol.dims();
    let (sx, sy, sz) = vol.spacing();
    let sidecar = json!({
        "dims": [nx, ny, nz],
        "spacing": [sx, sy, sz],
        "dtype": "f32",
        "byte_order": "little",
        "raw": raw_name,
        "domain": vol.domain(),
    });

    let mut bytes = Vec::with_capacity(vol.len() * 4);
    for v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(io_err(&raw_path))?;
    fs::write(json_path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .map_err(io_err(json_path))
}

/// Reads an RVOL sidecar + payload back into a [`ScalarVolume`].
pub fn read_rvol(json_path: &Path) -> Result<ScalarVolume> {
    let text = fs::read_to_string(json_path).map_err(io_err(json_path))?;
    let sidecar: Value = serde_json::from_str(&text)?;

    let field = |name: &str| -> Result<&Value> {
        sidecar
            .get(name)
            .ok_or_else(|| Error::MissingField(name.to_string()))
    };
    let usize_triple = |name: &str| -> Result<(usize, usize, usize)> {
        let arr = field(name)?
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| Error::MissingField(name.to_string()))?;
        let mut out = [0usize; 3];
        for (i, v) in arr.iter().enumerate() {
            out[i] = v
                .as_u64()
                .ok_or_else(|| Error::MissingField(name.to_string()))? as usize;
        }
        Ok((out[0], out[1], out[2]))
    };
    let f32_triple = |name: &str| -> Result<(f32, f32, f32)> {
        let arr = field(name)?
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| Error::MissingField(name.to_string()))?;
        let mut out = [0f32; 3];
        for (i, v) in arr.iter().enumerate() {
            out[i] = v
                .as_f64()
                .ok_or_else(|| Error::MissingField(name.to_string()))? as f32;
        }
        Ok((out[0], out[1], out[2]))
    };

    let dims = usize_triple("dims")?;
    let spacing = f32_triple("spacing")?;
    let dtype = field("dtype")?.as_str().unwrap_or_default();
    if dtype != "f32" {
        return Err(Error::UnsupportedDatatype(format!("rvol dtype \"{dtype}\"")));
    }
    let byte_order = field("byte_order")?.as_str().unwrap_or_default();
    if byte_order != "little" {
        return Err(Error::UnsupportedDatatype(format!(
            "rvol byte_order \"{byte_order}\""
        )));
    }
    let raw_name = field("raw")?
        .as_str()
        .ok_or_else(|| Error::MissingField("raw".to_string()))?;
    let domain = match sidecar.get("domain") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => IntensityDomain::RawHu,
    };

    let raw_path = json_path.with_file_name(raw_name);
    let bytes = fs::read(&raw_path).map_err(io_err(&raw_path))?;
    let expected = dims.0 * dims.1 * dims.2 * 4;
    if bytes.len() != expected {
        return Err(Error::DimsMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ScalarVolume::new(dims, spacing, data, domain)
}
