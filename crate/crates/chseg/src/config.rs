//! Layered pipeline configuration: built-in defaults, then an optional JSON
//! config file, then `--section.key=value` command-line overrides — later
//! layers win. The merged result is echoed into every report so a run can be
//! reproduced exactly from its artifacts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::histseg::{DEFAULT_EPS_SOFT, DEFAULT_HARD_THRESHOLD, PEAK_RATIO};
use crate::metrics::Connectivity;
use crate::preprocess::PreprocessConfig;
use crate::solver::SolverConfig;

/// Histogram-segmentation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistsegConfig {
    /// Interface width of the tanh soft threshold, in intensity units.
    pub eps_soft: f64,
    /// Lower bound of the hard lesion range.
    pub hard_threshold: f32,
    /// Mode-walk ratio of the histogram separation.
    pub peak_ratio: f64,
}

impl Default for HistsegConfig {
    fn default() -> Self {
        Self {
            eps_soft: DEFAULT_EPS_SOFT,
            hard_threshold: DEFAULT_HARD_THRESHOLD,
            peak_ratio: PEAK_RATIO,
        }
    }
}

impl HistsegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_soft > 0.0) || !self.eps_soft.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eps_soft {} must be positive and finite",
                self.eps_soft
            )));
        }
        if !self.hard_threshold.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "hard_threshold {} must be finite",
                self.hard_threshold
            )));
        }
        if !(self.peak_ratio > 0.0 && self.peak_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "peak_ratio {} must lie in (0,1)",
                self.peak_ratio
            )));
        }
        Ok(())
    }
}

/// Evaluation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Fraction of a GT lesion the prediction must cover to count as detected.
    pub min_overlap: f64,
    /// Component connectivity: 6 or 26.
    pub connectivity: Connectivity,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            min_overlap: 0.5,
            connectivity: Connectivity::Six,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "min_overlap {} must lie in (0,1]",
                self.min_overlap
            )));
        }
        Ok(())
    }
}

/// Input/output paths. Inputs may come from the command line instead; the
/// echoed config always shows the paths actually used.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub volume: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Also write mid-axial PGM slices of the pipeline stages.
    pub write_slices: bool,
}

/// The full nested pipeline configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub solver: SolverConfig,
    pub histseg: HistsegConfig,
    pub metrics: MetricsConfig,
    pub io: IoConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.solver.validate()?;
        self.histseg.validate()?;
        self.metrics.validate()?;
        Ok(())
    }

    /// Builds the effective config: defaults, deep-merged with the optional
    /// config file, then dotted-path overrides, in that precedence order.
    pub fn load(config_file: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let mut merged = serde_json::to_value(PipelineConfig::default())?;
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            let file_value: Value = serde_json::from_str(&text)?;
            deep_merge(&mut merged, file_value);
        }
        for item in overrides {
            let (path, raw) = item.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("override '{item}' is not of the form key=value"))
            })?;
            apply_override(&mut merged, path, raw)?;
        }
        let cfg: PipelineConfig = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The config with every default materialized to its concrete value
    /// (notably the stability-derived time step), ready for echoing.
    pub fn materialized(&self) -> Self {
        let mut c = self.clone();
        c.solver.dt = Some(c.solver.effective_dt());
        c
    }
}

/// Recursively overlays `patch` onto `base`: objects merge key-wise, any
/// other value replaces the base value.
fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(base_map), Value::Object(patch_map)) => {
            for (k, v) in patch_map {
                match base_map.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        base_map.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dotted path like `solver.steps` to a value parsed as JSON when
/// possible and as a bare string otherwise (so `--io.volume=scan.rvol` works
/// without quoting).
fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    let mut walked = String::new();
    for key in path.split('.') {
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("empty segment in '{path}'")));
        }
        if !walked.is_empty() {
            walked.push('.');
        }
        walked.push_str(key);
        let map = slot.as_object_mut().ok_or_else(|| {
            Error::InvalidConfig(format!("'{walked}' does not address a config section"))
        })?;
        slot = map.entry(key.to_string()).or_insert(Value::Null);
    }
    *slot = value;
    Ok(())
}

/// Splits raw arguments into dotted `--section.key=value` overrides and
/// everything else. Keeps the CLI parser free of dynamic flag names.
pub fn partition_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        if let Some(body) = arg.strip_prefix("--") {
            if let Some((key, _)) = body.split_once('=') {
                if key.contains('.') {
                    overrides.push(body.to_string());
                    continue;
                }
            }
        }
        rest.push(arg);
    }
    (rest, overrides)
}
