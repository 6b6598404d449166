//! Binary PGM ("P5") slice export for qualitative inspection.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{IntensityDomain, ScalarVolume};

/// Slicing axis for [`write_slice_pgm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::IndexOutOfRange(format!("unknown axis \"{other}\""))),
        }
    }
}

/// Maps a sample to a gray level: round-half-up of 255*clamp(v, 0, 1).
#[inline]
pub fn gray_level(v: f32) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

/// Writes one slice of `vol` perpendicular to `axis` at `index` as binary PGM
/// with maxval 255. The volume must carry normalized or phase-field samples.
pub fn write_slice_pgm(vol: &ScalarVolume, axis: Axis, index: usize, path: &Path) -> Result<()> {
    if vol.domain() == IntensityDomain::RawHu {
        return Err(Error::DomainMismatch(
            "PGM export needs normalized_unit or phase_field samples".into(),
        ));
    }
    let (nx, ny, nz) = vol.dims();
    let limit = match axis {
        Axis::X => nx,
        Axis::Y => ny,
        Axis::Z => nz,
    };
    if index >= limit {
        return Err(Error::IndexOutOfRange(format!(
            "slice index {index} out of range for axis {axis:?} with extent {limit}"
        )));
    }

    // Rows scan the slower in-slice axis, columns the faster one.
    let (width, height) = match axis {
        Axis::Z => (nx, ny),
        Axis::Y => (nx, nz),
        Axis::X => (ny, nz),
    };
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let v = match axis {
                Axis::Z => vol.get(col, row, index),
                Axis::Y => vol.get(col, index, row),
                Axis::X => vol.get(index, col, row),
            };
            pixels.push(gray_level(v));
        }
    }

    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
