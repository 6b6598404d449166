//! Raw CT volume + liver mask -> initial phase field ψ₀ on the cropped box Ω.
//!
//! Recipe: crop to the padded mask bounding box, clip to a fixed HU window,
//! find the central credibility interval [a,b] of the masked intensities,
//! re-clip to [0,b], divide by b, and plant the background value outside the
//! mask. The lower bound `a` is reported for diagnostics but takes part in no
//! clip: the second clip is to [0,b] by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{
    bounding_box, check_aligned, BinaryMask, IntensityDomain, ScalarVolume, VoxelBox,
};

/// Preprocessing knobs; defaults follow the standard CT-liver recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// HU clipping window applied before quantile estimation.
    pub hu_clip: (f32, f32),
    /// Central mass fraction of the credibility interval.
    pub credibility: f64,
    /// ψ value planted outside the liver mask.
    pub background_value: f32,
    /// Padding (voxels per face) around the mask bounding box.
    pub crop_pad: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            hu_clip: (0.0, 200.0),
            credibility: 0.95,
            background_value: 0.55,
            crop_pad: 8,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hu_clip.0 < self.hu_clip.1) {
            return Err(Error::InvalidConfig(format!(
                "hu_clip low {} must be < high {}",
                self.hu_clip.0, self.hu_clip.1
            )));
        }
        if !(self.credibility > 0.0 && self.credibility < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "credibility {} must lie in (0,1)",
                self.credibility
            )));
        }
        if !(self.background_value > 0.0 && self.background_value < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "background_value {} must lie in (0,1)",
                self.background_value
            )));
        }
        Ok(())
    }
}

/// What preprocessing did, serialized as
/// `{"a":…, "b":…, "crop_box":[[x0,x1],[y0,y1],[z0,z1]], "divisor":…}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessReport {
    #[serde(rename = "a")]
    pub interval_a: f32,
    #[serde(rename = "b")]
    pub interval_b: f32,
    /// Inclusive per-axis bounds of the crop box in input-volume coordinates.
    pub crop_box: [[usize; 2]; 3],
    #[serde(rename = "divisor")]
    pub normalization_divisor: f32,
}

/// Clamps every sample to [lo, hi]; the intensity domain is unchanged.
pub fn clip(vol: &ScalarVolume, lo: f32, hi: f32) -> ScalarVolume {
    vol.map(|v| v.clamp(lo, hi), vol.domain())
        .expect("clamped samples satisfy the source invariants")
}

/// Nearest-rank quantile: 1-based rank ⌈q·n⌉ of the ascending sort. A tiny
/// downward nudge counters float noise when q·n is an exact integer in real
/// arithmetic (e.g. q=0.025 at n=40 evaluates above 1.0 in f64).
fn nearest_rank(sorted: &[f32], q: f64) -> f32 {
    let n = sorted.len();
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Central credibility interval [a,b] holding `mass` of the masked samples:
/// a at quantile (1−mass)/2, b at 1−(1−mass)/2, nearest-rank estimator.
pub fn credibility_interval(
    vol: &ScalarVolume,
    mask: &BinaryMask,
    mass: f64,
) -> Result<(f32, f32)> {
    check_aligned(vol, mask)?;
    let mut samples: Vec<f32> = vol
        .data()
        .iter()
        .zip(mask.bits())
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyMask);
    }
    samples.sort_by(f32::total_cmp);
    let tail = (1.0 - mass) / 2.0;
    Ok((
        nearest_rank(&samples, tail),
        nearest_rank(&samples, 1.0 - tail),
    ))
}

/// Clip-then-divide normalization of one masked sample.
#[inline]
fn normalize_sample(v: f32, b: f32) -> f32 {
    v.clamp(0.0, b) / b
}

/// Full preprocessing: returns ψ₀ and the cropped mask χ on Ω plus a report.
///
/// Steps: (1) crop volume and mask to `bounding_box(mask, crop_pad)`;
/// (2) clip to the HU window; (3) compute [a,b] over masked voxels;
/// (4) clip to [0,b]; (5) divide by b; (6) background value outside χ.
pub fn make_initial_pff(
    vol: &ScalarVolume,
    mask: &BinaryMask,
    cfg: &PreprocessConfig,
) -> Result<(ScalarVolume, BinaryMask, PreprocessReport)> {
    cfg.validate()?;
    check_aligned(vol, mask)?;
    let bbox = bounding_box(mask, cfg.crop_pad)?;
    let vol_c = vol.crop(&bbox)?;
    let mask_c = mask.crop(&bbox)?;

    let clipped = clip(&vol_c, cfg.hu_clip.0, cfg.hu_clip.1);
    let (a, b) = credibility_interval(&clipped, &mask_c, cfg.credibility)?;
    if !(b > 0.0) {
        return Err(Error::DegenerateIntensity { b });
    }

    let data = clipped
        .data()
        .iter()
        .zip(mask_c.bits())
        .map(|(&v, &inside)| {
            if inside {
                normalize_sample(v, b)
            } else {
                cfg.background_value
            }
        })
        .collect();
    let psi0 = ScalarVolume::new(
        clipped.dims(),
        clipped.spacing(),
        data,
        IntensityDomain::PhaseField,
    )?;

    let report = PreprocessReport {
        interval_a: a,
        interval_b: b,
        crop_box: box_to_pairs(&bbox),
        normalization_divisor: b,
    };
    Ok((psi0, mask_c, report))
}

fn box_to_pairs(b: &VoxelBox) -> [[usize; 2]; 3] {
    [
        [b.min[0], b.max[0]],
        [b.min[1], b.max[1]],
        [b.min[2], b.max[2]],
    ]
}
