//! Voxel-wise and lesion-wise evaluation of predicted masks against ground
//! truth: Dice/sensitivity/specificity/precision over an evaluation region,
//! plus a component-based detection rate.
//!
//! Scores are computed inside the evaluation region only (the organ mask):
//! the method never predicts outside the organ, so counting the whole scan
//! would inflate specificity. Degenerate cases are pinned to avoid NaN in
//! batch reports: Dice = 1 when prediction and truth are both empty,
//! precision = 1 when both are empty (0 when only the prediction is empty),
//! sensitivity = 1 when the truth is empty, specificity = 1 when the region
//! has no negatives, detection rate = 1 when there are no true lesions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

/// Voxel confusion counts within the evaluation region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    /// False negatives (`fn` is a keyword).
    pub fn_: u64,
}

/// Neighborhood used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// Face neighbors only — the strictest standard choice.
    Six,
    /// Face, edge, and corner neighbors.
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> Vec<(i64, i64, i64)> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx, dy, dz) == (0, 0, 0) {
                        continue;
                    }
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    if self == Connectivity::TwentySix || manhattan == 1 {
                        out.push((dx, dy, dz));
                    }
                }
            }
        }
        out
    }
}

/// Connected-component labeling: 0 is background, components are labeled
/// 1..=count ordered by their smallest linear voxel index.
#[derive(Debug, Clone)]
pub struct ComponentLabels {
    pub labels: Vec<u32>,
    pub count: usize,
    dims: (usize, usize, usize),
}

impl ComponentLabels {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Voxel count of each component, indexed by label − 1.
    pub fn sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[(l - 1) as usize] += 1;
            }
        }
        sizes
    }
}

/// Per-lesion detection record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LesionOverlap {
    pub lesion_id: u32,
    pub gt_voxels: u64,
    pub overlap_voxels: u64,
    pub detected: bool,
}

/// Voxel scores plus lesion-wise detection for one volume.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub detection_rate: f64,
    pub per_lesion: Vec<LesionOverlap>,
}

fn check_mask_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::InvalidVolume(format!(
            "mask dims {:?} != {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Confusion counts over the voxels of `region` only.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask, region: &BinaryMask) -> Result<ConfusionCounts> {
    check_mask_dims(pred, gt)?;
    check_mask_dims(pred, region)?;
    let mut c = ConfusionCounts::default();
    for ((&p, &g), &r) in pred.bits().iter().zip(gt.bits()).zip(region.bits()) {
        if !r {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Dice = 2tp/(2tp+fp+fn) with the both-empty convention Dice = 1.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

/// Sens = tp/(tp+fn); 1 when the truth is empty.
pub fn sensitivity(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// Spec = tn/(tn+fp); 1 when the region has no negatives.
pub fn specificity(c: &ConfusionCounts) -> f64 {
    let denom = c.tn + c.fp;
    if denom == 0 {
        1.0
    } else {
        c.tn as f64 / denom as f64
    }
}

/// Prec = tp/(tp+fp); with an empty prediction this is 1 when the truth is
/// also empty and 0 otherwise.
pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp;
    if denom == 0 {
        if c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / denom as f64
    }
}

/// Labels connected components of the mask under the given connectivity
/// using an explicit-queue flood fill in linear-index scan order.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabels {
    let (nx, ny, nz) = mask.dims();
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let offsets = connectivity.offsets();
    let mut count = 0u32;
    let mut queue: Vec<usize> = Vec::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push(start);
        while let Some(i) = queue.pop() {
            let x = (i % nx) as i64;
            let y = ((i / nx) % ny) as i64;
            let z = (i / (nx * ny)) as i64;
            for &(dx, dy, dz) in &offsets {
                let (qx, qy, qz) = (x + dx, y + dy, z + dz);
                if qx < 0 || qy < 0 || qz < 0 {
                    continue;
                }
                let (qx, qy, qz) = (qx as usize, qy as usize, qz as usize);
                if qx >= nx || qy >= ny || qz >= nz {
                    continue;
                }
                let q = qx + nx * (qy + ny * qz);
                if bits[q] && labels[q] == 0 {
                    labels[q] = count;
                    queue.push(q);
                }
            }
        }
    }
    ComponentLabels {
        labels,
        count: count as usize,
        dims: (nx, ny, nz),
    }
}

/// Component-based detection: a ground-truth lesion counts as detected when
/// the prediction covers at least `min_overlap` of its voxels. The rate is
/// detected/total, or 1.0 when the truth has no lesions.
pub fn detection_rate(
    pred: &BinaryMask,
    gt: &BinaryMask,
    min_overlap: f64,
    connectivity: Connectivity,
) -> Result<(f64, Vec<LesionOverlap>)> {
    check_mask_dims(pred, gt)?;
    let components = label_components(gt, connectivity);
    if components.count == 0 {
        return Ok((1.0, Vec::new()));
    }
    let mut gt_voxels = vec![0u64; components.count];
    let mut overlap = vec![0u64; components.count];
    for (i, &l) in components.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        gt_voxels[(l - 1) as usize] += 1;
        if pred.bits()[i] {
            overlap[(l - 1) as usize] += 1;
        }
    }
    let mut per_lesion = Vec::with_capacity(components.count);
    let mut detected = 0usize;
    for k in 0..components.count {
        let hit = overlap[k] as f64 / gt_voxels[k] as f64 >= min_overlap;
        if hit {
            detected += 1;
        }
        per_lesion.push(LesionOverlap {
            lesion_id: (k + 1) as u32,
            gt_voxels: gt_voxels[k],
            overlap_voxels: overlap[k],
            detected: hit,
        });
    }
    Ok((detected as f64 / components.count as f64, per_lesion))
}

/// Full per-volume evaluation: voxel scores over the region plus detection.
pub fn evaluate(
    pred: &BinaryMask,
    gt: &BinaryMask,
    region: &BinaryMask,
    min_overlap: f64,
    connectivity: Connectivity,
) -> Result<MetricsReport> {
    let c = confusion(pred, gt, region)?;
    let (rate, per_lesion) = detection_rate(pred, gt, min_overlap, connectivity)?;
    Ok(MetricsReport {
        dice: dice(&c),
        sensitivity: sensitivity(&c),
        specificity: specificity(&c),
        precision: precision(&c),
        detection_rate: rate,
        per_lesion,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-volume report CSV with header
/// `volume_id,dice,sensitivity,specificity,precision,detection_rate` and a
/// final `mean±std` summary row (population std, matching the customary
/// mean ± std presentation of cohort tables).
pub fn report_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("volume_id,dice,sensitivity,specificity,precision,detection_rate\n");
    for (id, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            id, r.dice, r.sensitivity, r.specificity, r.precision, r.detection_rate
        ));
    }
    if !rows.is_empty() {
        let cols: [fn(&MetricsReport) -> f64; 5] = [
            |r| r.dice,
            |r| r.sensitivity,
            |r| r.specificity,
            |r| r.precision,
            |r| r.detection_rate,
        ];
        let cells: Vec<String> = cols
            .iter()
            .map(|get| {
                let values: Vec<f64> = rows.iter().map(|(_, r)| get(r)).collect();
                let (mean, std) = mean_std(&values);
                format!("{mean:.4} ± {std:.4}")
            })
            .collect();
        out.push_str(&format!("mean±std,{}\n", cells.join(",")));
    }
    out
}

/// Per-lesion CSV with header
/// `volume_id,lesion_id,gt_voxels,overlap_voxels,detected`.
pub fn per_lesion_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("volume_id,lesion_id,gt_voxels,overlap_voxels,detected\n");
    for (id, r) in rows {
        for l in &r.per_lesion {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id, l.lesion_id, l.gt_voxels, l.overlap_voxels, l.detected
            ));
        }
    }
    out
}
