//! Core volumetric data types and bit-exact file I/O.
//!
//! A [`ScalarVolume`] is a dense 3D grid of f32 samples in x-fastest linear
//! order with per-axis voxel spacing in millimetres and an intensity-domain
//! tag; a [`BinaryMask`] is a boolean grid in the same order. File formats:
//! read-only NIfTI-1 ([`nifti`]), the RVOL JSON+raw pair ([`rvol`]) used for
//! all volume outputs, and binary PGM slice exports ([`pgm`]).

mod nifti;
mod pgm;
mod rvol;

pub use nifti::{read_nifti_mask, read_nifti_volume};
pub use pgm::{write_slice_pgm, Axis};
pub use rvol::{read_rvol, write_rvol};

use crate::error::{Error, Result};

/// What the samples of a [`ScalarVolume`] mean.
///
/// `RawHu` carries unbounded CT intensities; `NormalizedUnit` and `PhaseField`
/// are dimensionless and bounded to [-0.25, 1.25] (solver transients may
/// slightly overshoot [0,1]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityDomain {
    RawHu,
    NormalizedUnit,
    PhaseField,
}

impl std::fmt::Display for IntensityDomain {
    /// Prints the same snake_case name the sidecar format uses.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IntensityDomain::RawHu => "raw_hu",
            IntensityDomain::NormalizedUnit => "normalized_unit",
            IntensityDomain::PhaseField => "phase_field",
        })
    }
}

/// Bound on normalized/phase-field samples; solver overshoot stays inside it.
pub const DOMAIN_BOUND: (f32, f32) = (-0.25, 1.25);

/// Dense 3D scalar grid, x-fastest: `idx = x + nx*(y + ny*z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: (usize, usize, usize),
    spacing: (f32, f32, f32),
    data: Vec<f32>,
    domain: IntensityDomain,
}

impl ScalarVolume {
    /// Builds a volume after validating every invariant: dims >= 1, spacing
    /// > 0, data length = nx*ny*nz, all samples finite, and samples within
    /// [`DOMAIN_BOUND`] for normalized/phase-field domains.
    pub fn new(
        dims: (usize, usize, usize),
        spacing: (f32, f32, f32),
        data: Vec<f32>,
        domain: IntensityDomain,
    ) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx < 1 || ny < 1 || nz < 1 {
            return Err(Error::InvalidVolume(format!(
                "dims must all be >= 1, got {nx}x{ny}x{nz}"
            )));
        }
        let expected = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::InvalidVolume("dims overflow".into()))?;
        if data.len() != expected {
            return Err(Error::InvalidVolume(format!(
                "data length {} != {nx}*{ny}*{nz} = {expected}",
                data.len()
            )));
        }
        for (axis, s) in [spacing.0, spacing.1, spacing.2].into_iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidVolume(format!(
                    "spacing[{axis}] = {s} must be positive and finite"
                )));
            }
        }
        validate_samples(&data, domain)?;
        Ok(Self {
            dims,
            spacing,
            data,
            domain,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f32, f32, f32) {
        self.spacing
    }

    pub fn domain(&self) -> IntensityDomain {
        self.domain
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Linear index of voxel (x, y, z); callers must stay in bounds.
    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.idx(x, y, z)]
    }

    /// Re-tags the samples, revalidating range invariants for the new domain.
    pub fn with_domain(self, domain: IntensityDomain) -> Result<Self> {
        ScalarVolume::new(self.dims, self.spacing, self.data, domain)
    }

    /// Applies `f` to every sample, revalidating invariants on the result.
    pub fn map(&self, f: impl Fn(f32) -> f32, domain: IntensityDomain) -> Result<Self> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        ScalarVolume::new(self.dims, self.spacing, data, domain)
    }

    /// Copies the sub-volume covered by `bbox` (inclusive bounds).
    pub fn crop(&self, bbox: &VoxelBox) -> Result<Self> {
        bbox.check_within(self.dims)?;
        let (cnx, cny, cnz) = bbox.extent();
        let mut data = Vec::with_capacity(cnx * cny * cnz);
        for z in bbox.min[2]..=bbox.max[2] {
            for y in bbox.min[1]..=bbox.max[1] {
                let row = self.idx(bbox.min[0], y, z);
                data.extend_from_slice(&self.data[row..row + cnx]);
            }
        }
        ScalarVolume::new((cnx, cny, cnz), self.spacing, data, self.domain)
    }
}

fn validate_samples(data: &[f32], domain: IntensityDomain) -> Result<()> {
    let bounded = matches!(
        domain,
        IntensityDomain::NormalizedUnit | IntensityDomain::PhaseField
    );
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidVolume(format!(
                "non-finite sample {v} at linear index {i}"
            )));
        }
        if bounded && !(DOMAIN_BOUND.0..=DOMAIN_BOUND.1).contains(&v) {
            return Err(Error::InvalidVolume(format!(
                "sample {v} at linear index {i} outside [{}, {}] for {domain:?}",
                DOMAIN_BOUND.0, DOMAIN_BOUND.1
            )));
        }
    }
    Ok(())
}

/// Dense 3D boolean grid aligned to a [`ScalarVolume`] (same linear order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: (usize, usize, usize),
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: (usize, usize, usize), bits: Vec<bool>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx < 1 || ny < 1 || nz < 1 {
            return Err(Error::InvalidVolume(format!(
                "dims must all be >= 1, got {nx}x{ny}x{nz}"
            )));
        }
        if bits.len() != nx * ny * nz {
            return Err(Error::InvalidVolume(format!(
                "mask length {} != {nx}*{ny}*{nz}",
                bits.len()
            )));
        }
        Ok(Self { dims, bits })
    }

    /// All-false mask of the given shape.
    pub fn empty(dims: (usize, usize, usize)) -> Result<Self> {
        let (nx, ny, nz) = dims;
        Self::new(dims, vec![false; nx * ny * nz])
    }

    /// Mask of the volume's nonzero samples (exact comparison with 0.0).
    pub fn from_nonzero(vol: &ScalarVolume) -> Self {
        Self {
            dims: vol.dims(),
            bits: vol.data().iter().map(|&v| v != 0.0).collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.idx(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.idx(x, y, z);
        self.bits[i] = value;
    }

    /// Number of set voxels.
    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Copies the sub-mask covered by `bbox` (inclusive bounds).
    pub fn crop(&self, bbox: &VoxelBox) -> Result<Self> {
        bbox.check_within(self.dims)?;
        let (cnx, cny, cnz) = bbox.extent();
        let mut bits = Vec::with_capacity(cnx * cny * cnz);
        for z in bbox.min[2]..=bbox.max[2] {
            for y in bbox.min[1]..=bbox.max[1] {
                let row = self.idx(bbox.min[0], y, z);
                bits.extend_from_slice(&self.bits[row..row + cnx]);
            }
        }
        BinaryMask::new((cnx, cny, cnz), bits)
    }

    /// Converts to a 0.0/1.0 volume for RVOL export.
    pub fn to_volume(&self, spacing: (f32, f32, f32)) -> ScalarVolume {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ScalarVolume::new(self.dims, spacing, data, IntensityDomain::NormalizedUnit)
            .expect("0/1 data always satisfies volume invariants")
    }
}

/// Axis-aligned voxel box with inclusive `min`/`max` corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct VoxelBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl VoxelBox {
    /// Voxel counts per axis.
    pub fn extent(&self) -> (usize, usize, usize) {
        (
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        )
    }

    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        (self.min[0]..=self.max[0]).contains(&x)
            && (self.min[1]..=self.max[1]).contains(&y)
            && (self.min[2]..=self.max[2]).contains(&z)
    }

    fn check_within(&self, dims: (usize, usize, usize)) -> Result<()> {
        let (nx, ny, nz) = dims;
        let inside = self.min[0] <= self.max[0]
            && self.min[1] <= self.max[1]
            && self.min[2] <= self.max[2]
            && self.max[0] < nx
            && self.max[1] < ny
            && self.max[2] < nz;
        if inside {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange(format!(
                "box {self:?} does not fit in {nx}x{ny}x{nz}"
            )))
        }
    }
}

/// Checks that a volume and a mask cover the same grid.
pub fn check_aligned(vol: &ScalarVolume, mask: &BinaryMask) -> Result<()> {
    if vol.dims() != mask.dims() {
        return Err(Error::InvalidVolume(format!(
            "volume dims {:?} != mask dims {:?}",
            vol.dims(),
            mask.dims()
        )));
    }
    Ok(())
}

/// Smallest box containing every set voxel, grown by `pad` on each face and
/// clamped to the mask bounds. Errors with [`Error::EmptyMask`] when nothing
/// is set.
pub fn bounding_box(mask: &BinaryMask, pad: usize) -> Result<VoxelBox> {
    let (nx, ny, nz) = mask.dims();
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    let mut seen = false;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get(x, y, z) {
                    seen = true;
                    let p = [x, y, z];
                    for a in 0..3 {
                        min[a] = min[a].min(p[a]);
                        max[a] = max[a].max(p[a]);
                    }
                }
            }
        }
    }
    if !seen {
        return Err(Error::EmptyMask);
    }
    let hi = [nx - 1, ny - 1, nz - 1];
    for a in 0..3 {
        min[a] = min[a].saturating_sub(pad);
        max[a] = (max[a] + pad).min(hi[a]);
    }
    Ok(VoxelBox { min, max })
}
