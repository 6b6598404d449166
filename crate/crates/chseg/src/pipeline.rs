//! Command implementations behind the CLI: each `cmd_*` loads its inputs,
//! drives the library modules, and writes artifacts into the output
//! directory. Every output directory receives a `config_echo.json` with all
//! defaults materialized, so any run can be reproduced from its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::histseg;
use crate::metrics;
use crate::phantom::{self, PhantomSpec};
use crate::preprocess;
use crate::solver;
use crate::volume::{
    read_nifti_mask, read_nifti_volume, read_rvol, write_rvol, write_slice_pgm, Axis, BinaryMask,
    ScalarVolume, VoxelBox,
};

/// Reads a scalar volume, dispatching on the file extension
/// (`.rvol` sidecar JSON or `.nii`).
pub fn load_volume(path: &Path) -> Result<ScalarVolume> {
    match extension(path) {
        Some("rvol") => read_rvol(path),
        Some("nii") => read_nifti_volume(path),
        _ => Err(Error::InvalidConfig(format!(
            "{}: expected a .rvol or .nii volume",
            path.display()
        ))),
    }
}

/// Reads a mask: nonzero voxels of the stored volume are set.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    match extension(path) {
        Some("rvol") => Ok(BinaryMask::from_nonzero(&read_rvol(path)?)),
        Some("nii") => read_nifti_mask(path),
        _ => Err(Error::InvalidConfig(format!(
            "{}: expected a .rvol or .nii mask",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes report text to standard output. A closed pipe (e.g. `| head`) ends
/// the output without error.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(source) if source.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg
        .io
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("an output directory is required (--out DIR)".into()))?;
    fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn write_config_echo(cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let echo = serde_json::to_string_pretty(&cfg.materialized())?;
    write_text(&out_dir.join("config_echo.json"), &(echo + "\n"))
}

fn require_input<'a>(slot: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("{what} path is required")))
}

macro_rules! vlog {
    ($verbose:expr, $($arg:tt)*) => {
        if $verbose {
            eprintln!($($arg)*);
        }
    };
}

/// Full pipeline: preprocess → evolve → histogram separation → soft/hard
/// masks, with trace/histogram/report artifacts.
pub fn cmd_segment(cfg: &PipelineConfig, verbose: bool) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let vol_path = require_input(&cfg.io.volume, "input volume")?;
    let mask_path = require_input(&cfg.io.mask, "organ mask")?;

    let raw = load_volume(vol_path)?;
    let chi_full = load_mask(mask_path)?;
    vlog!(verbose, "loaded volume {:?} dims {:?}", vol_path, raw.dims());

    let (psi0, chi, report) = preprocess::make_initial_pff(&raw, &chi_full, &cfg.preprocess)?;
    vlog!(
        verbose,
        "preprocess: crop {:?} -> dims {:?}, interval [{}, {}]",
        report.crop_box,
        psi0.dims(),
        report.interval_a,
        report.interval_b
    );

    let hist_before = histseg::histogram(&psi0, &chi)?;
    let (psi_final, trace) = solver::evolve(&psi0, &cfg.solver)?;
    vlog!(
        verbose,
        "solver: {} steps, energy {} -> {}",
        trace.step_index.last().copied().unwrap_or(0),
        trace.energy.first().copied().unwrap_or(0.0),
        trace.energy.last().copied().unwrap_or(0.0)
    );

    let hist_after = histseg::histogram(&psi_final, &chi)?;
    let peaks = histseg::detect_peaks(&hist_after);
    let threshold_i0 = histseg::separate_modes_with(&peaks, cfg.histseg.peak_ratio);
    let soft = histseg::soft_segment(&psi_final, &chi, threshold_i0, cfg.histseg.eps_soft)?;
    let hard = histseg::hard_segment(&soft, &chi, cfg.histseg.hard_threshold)?;
    vlog!(
        verbose,
        "histseg: {} peaks, I0 = {}, {} lesion voxels",
        peaks.len(),
        threshold_i0,
        hard.count_set()
    );

    trace.write_csv(&out_dir.join("trace.csv"))?;
    write_text(
        &out_dir.join("histogram.csv"),
        &histseg::histogram_csv(&hist_before, &hist_after),
    )?;
    write_rvol(&psi_final, &out_dir.join("final_pff.rvol"))?;
    write_rvol(&soft, &out_dir.join("soft.rvol"))?;
    write_rvol(&hard.to_volume(soft.spacing()), &out_dir.join("hard.rvol"))?;

    if cfg.io.write_slices {
        let z = psi0.dims().2 / 2;
        for (vol, name) in [
            (&psi0, "initial_pff_mid.pgm"),
            (&psi_final, "evolved_pff_mid.pgm"),
            (&soft, "soft_mid.pgm"),
            (&hard.to_volume(soft.spacing()), "hard_mid.pgm"),
        ] {
            write_slice_pgm(vol, Axis::Z, z, &out_dir.join(name))?;
        }
    }

    let report_json = json!({
        "preprocess": report,
        "histseg": histseg::peaks_json(&peaks, threshold_i0, cfg.histseg.eps_soft),
        "hard_threshold": cfg.histseg.hard_threshold,
        "lesion_voxels": hard.count_set(),
        "config": cfg.materialized(),
    });
    write_text(
        &out_dir.join("report.json"),
        &(serde_json::to_string_pretty(&report_json)? + "\n"),
    )?;
    write_config_echo(cfg, &out_dir)?;
    vlog!(verbose, "artifacts written to {}", out_dir.display());
    Ok(())
}

/// Solver-only run on an existing phase-field volume, for energy/profile
/// studies: writes trace.csv and the final field.
pub fn cmd_solve(cfg: &PipelineConfig, verbose: bool) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let vol_path = require_input(&cfg.io.volume, "input phase-field volume")?;
    let psi0 = load_volume(vol_path)?;
    vlog!(verbose, "loaded {:?} dims {:?}", vol_path, psi0.dims());
    let (psi_final, trace) = solver::evolve(&psi0, &cfg.solver)?;
    trace.write_csv(&out_dir.join("trace.csv"))?;
    write_rvol(&psi_final, &out_dir.join("final_pff.rvol"))?;
    write_config_echo(cfg, &out_dir)?;
    vlog!(
        verbose,
        "energy {} -> {}",
        trace.energy.first().copied().unwrap_or(0.0),
        trace.energy.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

/// Generates a phantom from a JSON spec: raw scan, liver mask, lesion GT,
/// plus a report echoing the spec (seed included).
pub fn cmd_phantom(cfg: &PipelineConfig, spec_path: &Path, verbose: bool) -> Result<()> {
    let out_dir = ensure_out_dir(cfg)?;
    let text = fs::read_to_string(spec_path).map_err(|source| Error::Io {
        path: spec_path.display().to_string(),
        source,
    })?;
    let spec = PhantomSpec::from_json(&text)?;
    let (raw, liver, lesions_gt) = phantom::generate(&spec)?;
    write_rvol(&raw, &out_dir.join("phantom.rvol"))?;
    write_rvol(&liver.to_volume(raw.spacing()), &out_dir.join("liver_mask.rvol"))?;
    write_rvol(
        &lesions_gt.to_volume(raw.spacing()),
        &out_dir.join("lesions_gt.rvol"),
    )?;
    let report = json!({
        "spec": spec,
        "liver_voxels": liver.count_set(),
        "lesion_voxels": lesions_gt.count_set(),
    });
    write_text(
        &out_dir.join("phantom_report.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    write_config_echo(cfg, &out_dir)?;
    vlog!(
        verbose,
        "phantom {:?}: {} liver voxels, {} lesion voxels",
        spec.dims,
        liver.count_set(),
        lesions_gt.count_set()
    );
    Ok(())
}

/// Evaluates a predicted mask against ground truth inside a region; prints
/// the report CSV to standard output and, when an output directory is set,
/// writes report.csv and per_lesion.csv.
pub fn cmd_metrics(
    cfg: &PipelineConfig,
    pred_path: &Path,
    gt_path: &Path,
    region_path: &Path,
) -> Result<()> {
    let pred = load_mask(pred_path)?;
    let gt = load_mask(gt_path)?;
    let region = load_mask(region_path)?;
    let report = metrics::evaluate(
        &pred,
        &gt,
        &region,
        cfg.metrics.min_overlap,
        cfg.metrics.connectivity,
    )?;
    let volume_id = pred_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("volume")
        .to_string();
    let rows = vec![(volume_id, report)];
    print_stdout(&metrics::report_csv(&rows))?;
    if cfg.io.out_dir.is_some() {
        let out_dir = ensure_out_dir(cfg)?;
        write_text(&out_dir.join("report.csv"), &metrics::report_csv(&rows))?;
        write_text(&out_dir.join("per_lesion.csv"), &metrics::per_lesion_csv(&rows))?;
        write_config_echo(cfg, &out_dir)?;
    }
    Ok(())
}

/// Prints the histogram of a volume inside a mask, with detected peaks and
/// the separation threshold, to standard output.
pub fn cmd_histogram(cfg: &PipelineConfig, vol_path: &Path, mask_path: &Path) -> Result<()> {
    let vol = load_volume(vol_path)?;
    let chi = load_mask(mask_path)?;
    let hist = histseg::histogram(&vol, &chi)?;
    let peaks = histseg::detect_peaks(&hist);
    let threshold_i0 = histseg::separate_modes_with(&peaks, cfg.histseg.peak_ratio);
    let mut out = String::from("bin,center,count\n");
    for (i, &c) in hist.counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            i,
            histseg::IntensityHistogram::bin_center(i),
            c
        ));
    }
    out.push_str(&histseg::peaks_json(&peaks, threshold_i0, cfg.histseg.eps_soft).to_string());
    out.push('\n');
    print_stdout(&out)
}

/// Crop box stored in a preprocess report, as a [`VoxelBox`].
pub fn crop_box_of(report: &preprocess::PreprocessReport) -> VoxelBox {
    VoxelBox {
        min: [report.crop_box[0][0], report.crop_box[1][0], report.crop_box[2][0]],
        max: [report.crop_box[0][1], report.crop_box[1][1], report.crop_box[2][1]],
    }
}
