//! Read-only NIfTI-1 ingestion (uncompressed single-file `.nii`).
//!
//! Only the header fields the pipeline needs are interpreted: `dim`,
//! `pixdim`, `datatype`, `scl_slope`, `scl_inter`, `vox_offset`, `magic`.
//! Orientation (qform/sform) is deliberately ignored; the voxel grid is taken
//! as stored, x-fastest. Datatypes u8, i16, i32 and f32 are accepted and
//! rescaled to f32 as `stored * scl_slope + scl_inter` (slope 0 means 1).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, IntensityDomain, ScalarVolume};

/// Byte offsets into the 348-byte NIfTI-1 header.
mod layout {
    pub const DIM: usize = 40; // i16[8]
    pub const DATATYPE: usize = 70; // i16
    pub const PIXDIM: usize = 76; // f32[8]
    pub const VOX_OFFSET: usize = 108; // f32
    pub const SCL_SLOPE: usize = 112; // f32
    pub const SCL_INTER: usize = 116; // f32
    pub const MAGIC: usize = 344; // u8[4]
    pub const HEADER_LEN: usize = 348;
}

const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";

fn le_i16(bytes: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn le_f32(bytes: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

/// Reads a NIfTI-1 file as a raw-HU scalar volume.
pub fn read_nifti_volume(path: &Path) -> Result<ScalarVolume> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

/// Reads a NIfTI-1 file as a binary mask: a voxel is set iff its rescaled
/// sample is nonzero.
pub fn read_nifti_mask(path: &Path) -> Result<BinaryMask> {
    Ok(BinaryMask::from_nonzero(&read_nifti_volume(path)?))
}

fn decode(bytes: &[u8]) -> Result<ScalarVolume> {
    if bytes.len() < layout::HEADER_LEN {
        return Err(Error::TruncatedData {
            expected: layout::HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[layout::MAGIC..layout::MAGIC + 4].try_into().unwrap();
    if magic != MAGIC_SINGLE {
        return Err(Error::BadMagic { found: magic });
    }

    let datatype = le_i16(bytes, layout::DATATYPE);
    let elem_size = match datatype {
        2 => 1, // u8
        4 => 2, // i16
        8 => 4, // i32
        16 => 4, // f32
        code => {
            return Err(Error::UnsupportedDatatype(format!(
                "NIfTI datatype code {code}"
            )))
        }
    };

    let dim: Vec<i16> = (0..8).map(|i| le_i16(bytes, layout::DIM + 2 * i)).collect();
    let ndim = dim[0];
    match ndim {
        3 => {}
        4 if dim[4] == 1 => {} // singleton time axis collapses to 3-D
        _ => {
            return Err(Error::UnsupportedDimensionality(format!(
                "dim[0]={ndim}, dim[4]={} (only 3-D, or 4-D with dim[4]=1)",
                dim[4]
            )))
        }
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let d = dim[1 + a];
        if d < 1 {
            return Err(Error::UnsupportedDimensionality(format!(
                "dim[{}] = {d} must be >= 1",
                1 + a
            )));
        }
        dims[a] = d as usize;
    }

    let mut spacing = [0f32; 3];
    for a in 0..3 {
        let s = le_f32(bytes, layout::PIXDIM + 4 * (1 + a));
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonPositivePixdim {
                axis: 1 + a,
                value: s,
            });
        }
        spacing[a] = s;
    }

    let slope_raw = le_f32(bytes, layout::SCL_SLOPE);
    let slope = if slope_raw == 0.0 { 1.0 } else { slope_raw };
    let inter = le_f32(bytes, layout::SCL_INTER);

    let vox_offset_f = le_f32(bytes, layout::VOX_OFFSET);
    if !vox_offset_f.is_finite() || vox_offset_f < layout::HEADER_LEN as f32 {
        return Err(Error::IndexOutOfRange(format!(
            "vox_offset {vox_offset_f} points inside the header"
        )));
    }
    let vox_offset = vox_offset_f as usize;

    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::UnsupportedDimensionality("voxel count overflow".into()))?;
    let payload_len = n
        .checked_mul(elem_size)
        .ok_or_else(|| Error::UnsupportedDimensionality("payload size overflow".into()))?;
    let expected = vox_offset + payload_len;
    if bytes.len() < expected {
        return Err(Error::TruncatedData {
            expected,
            actual: bytes.len(),
        });
    }

    let payload = &bytes[vox_offset..expected];
    let rescale = |stored: f32| stored * slope + inter;
    let data: Vec<f32> = match datatype {
        2 => payload.iter().map(|&b| rescale(b as f32)).collect(),
        4 => payload
            .chunks_exact(2)
            .map(|c| rescale(i16::from_le_bytes([c[0], c[1]]) as f32))
            .collect(),
        8 => payload
            .chunks_exact(4)
            .map(|c| rescale(i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f32))
            .collect(),
        16 => payload
            .chunks_exact(4)
            .map(|c| rescale(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        _ => unreachable!("datatype validated above"),
    };

    ScalarVolume::new(
        (dims[0], dims[1], dims[2]),
        (spacing[0], spacing[1], spacing[2]),
        data,
        IntensityDomain::RawHu,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal header builder for error-path tests; fixture files from an
    /// independent writer cover the happy paths (see tests/nifti_fixtures.rs).
    fn build(
        dim: [i16; 8],
        datatype: i16,
        pixdim: [f32; 8],
        vox_offset: f32,
        slope: f32,
        inter: f32,
        magic: &[u8; 4],
        payload: &[u8],
    ) -> Vec<u8> {
        let mut h = vec![0u8; layout::HEADER_LEN];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        for (i, d) in dim.iter().enumerate() {
            h[layout::DIM + 2 * i..layout::DIM + 2 * i + 2].copy_from_slice(&d.to_le_bytes());
        }
        h[layout::DATATYPE..layout::DATATYPE + 2].copy_from_slice(&datatype.to_le_bytes());
        for (i, p) in pixdim.iter().enumerate() {
            h[layout::PIXDIM + 4 * i..layout::PIXDIM + 4 * i + 4]
                .copy_from_slice(&p.to_le_bytes());
        }
        h[layout::VOX_OFFSET..layout::VOX_OFFSET + 4].copy_from_slice(&vox_offset.to_le_bytes());
        h[layout::SCL_SLOPE..layout::SCL_SLOPE + 4].copy_from_slice(&slope.to_le_bytes());
        h[layout::SCL_INTER..layout::SCL_INTER + 4].copy_from_slice(&inter.to_le_bytes());
        h[layout::MAGIC..layout::MAGIC + 4].copy_from_slice(magic);
        h.extend_from_slice(payload);
        h
    }

    const PIX1: [f32; 8] = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];

    fn f32_payload(values: &[f32]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn identity_f32_roundtrip() {
        let vals = [0.0f32, 1.5, -2.25, 100.0, 0.125, 7.0, -0.5, 3.0];
        let bytes = build(
            [3, 2, 2, 2, 0, 0, 0, 0],
            16,
            PIX1,
            348.0,
            1.0,
            0.0,
            b"n+1\0",
            &f32_payload(&vals),
        );
        let vol = decode(&bytes).unwrap();
        assert_eq!(vol.dims(), (2, 2, 2));
        assert_eq!(vol.data(), &vals);
        assert_eq!(vol.domain(), IntensityDomain::RawHu);
    }

    #[test]
    fn bad_magic_rejected() {
        let bytes = build(
            [3, 1, 1, 1, 0, 0, 0, 0],
            16,
            PIX1,
            348.0,
            1.0,
            0.0,
            b"ni1\0",
            &f32_payload(&[0.0]),
        );
        assert!(matches!(decode(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn unsupported_datatype_rejected() {
        // 64 = f64, not in the supported set
        let bytes = build(
            [3, 1, 1, 1, 0, 0, 0, 0],
            64,
            PIX1,
            348.0,
            1.0,
            0.0,
            b"n+1\0",
            &[0u8; 8],
        );
        assert!(matches!(decode(&bytes), Err(Error::UnsupportedDatatype(_))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = build(
            [3, 2, 2, 2, 0, 0, 0, 0],
            16,
            PIX1,
            348.0,
            1.0,
            0.0,
            b"n+1\0",
            &f32_payload(&[0.0; 7]), // one sample short
        );
        match decode(&bytes) {
            Err(Error::TruncatedData { expected, actual }) => {
                assert_eq!(expected, 348 + 32);
                assert_eq!(actual, 348 + 28);
            }
            other => panic!("expected TruncatedData, got {other:?}"),
        }
    }

    #[test]
    fn zero_pixdim_rejected() {
        let mut pix = PIX1;
        pix[2] = 0.0;
        let bytes = build(
            [3, 1, 1, 1, 0, 0, 0, 0],
            16,
            pix,
            348.0,
            1.0,
            0.0,
            b"n+1\0",
            &f32_payload(&[0.0]),
        );
        match decode(&bytes) {
            Err(Error::NonPositivePixdim { axis, value }) => {
                assert_eq!(axis, 2);
                assert_eq!(value, 0.0);
            }
            other => panic!("expected NonPositivePixdim, got {other:?}"),
        }
    }

    #[test]
    fn non_singleton_fourth_dim_rejected() {
        let bytes = build(
            [4, 1, 1, 1, 2, 0, 0, 0],
            16,
            PIX1,
            348.0,
            1.0,
            0.0,
            b"n+1\0",
            &f32_payload(&[0.0, 0.0]),
        );
        assert!(matches!(
            decode(&bytes),
            Err(Error::UnsupportedDimensionality(_))
        ));
    }

    #[test]
    fn slope_zero_defaults_to_one() {
        let bytes = build(
            [3, 1, 1, 1, 0, 0, 0, 0],
            16,
            PIX1,
            348.0,
            0.0,
            5.0,
            b"n+1\0",
            &f32_payload(&[2.0]),
        );
        let vol = decode(&bytes).unwrap();
        assert_eq!(vol.data(), &[7.0]); // 2*1 + 5
    }

    #[test]
    fn mask_uses_nonzero_rule() {
        let bytes = build(
            [3, 4, 1, 1, 0, 0, 0, 0],
            16,
            PIX1,
            348.0,
            1.0,
            0.0,
            b"n+1\0",
            &f32_payload(&[0.0, 1.0, -3.0, 0.0]),
        );
        let vol = decode(&bytes).unwrap();
        let mask = BinaryMask::from_nonzero(&vol);
        assert_eq!(mask.bits(), &[false, true, true, false]);
    }
}
