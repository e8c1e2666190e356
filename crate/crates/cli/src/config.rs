//! Run configuration: one JSON document, with command-line flags applied on
//! top. Precedence is built-in defaults < config file < flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use seahorizon::eval::DEFAULT_IOU_THRESHOLD;
use seahorizon::geometry::CalibrationConfig;
use seahorizon::pipeline::{DetectionConfig, PipelineConfig, SegmentationConfig};
use seahorizon::stereo::VerificationConfig;
use seahorizon::synth::{DatasetLayout, SceneSpec};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Sequence root laid out like the output of `synth`; every other input
    /// path defaults to its place inside it.
    pub data: Option<PathBuf>,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    pub imu: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    /// Calibration document whose rotations replace those of `camera`.
    pub calibration: Option<PathBuf>,
    pub stereo: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationParams {
    pub dist_threshold: f64,
    pub inlier_tol: f64,
    pub max_iters: usize,
    pub min_inlier_ratio: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        let d = CalibrationConfig::<f64>::default();
        Self {
            dist_threshold: d.dist_threshold,
            inlier_tol: d.inlier_tol,
            max_iters: d.max_iters,
            min_inlier_ratio: d.min_inlier_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub iou_threshold: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub segmentation: SegmentationConfig,
    pub detection: DetectionConfig,
    pub stereo: VerificationConfig,
    pub calibration: CalibrationParams,
    pub eval: EvalParams,
    pub synth: SceneSpec,
    /// Seeds calibration sampling and, when set, replaces the scene seed.
    pub seed: Option<u64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let cfg = PipelineConfig {
            segmentation: self.segmentation,
            detection: self.detection,
            stereo: self.stereo,
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn calibration_config(&self) -> CalibrationConfig<f64> {
        let c = self.calibration;
        CalibrationConfig {
            dist_threshold: c.dist_threshold,
            inlier_tol: c.inlier_tol,
            max_iters: c.max_iters,
            min_inlier_ratio: c.min_inlier_ratio,
            seed: self.seed.unwrap_or(0),
        }
    }

    fn layout(&self) -> Option<DatasetLayout> {
        self.paths.data.as_ref().map(DatasetLayout::new)
    }

    /// An input path: the explicit setting, else the default inside the
    /// sequence root. It must exist.
    pub fn input(&self, name: &str, explicit: &Option<PathBuf>, in_layout: fn(&DatasetLayout) -> PathBuf) -> Result<PathBuf> {
        let path = explicit
            .clone()
            .or_else(|| self.layout().map(|l| in_layout(&l)))
            .ok_or_else(|| Failure::Usage(format!("no {name} path given (set it or a data directory)")))?;
        if !path.exists() {
            return Err(Failure::Usage(format!("{name} path {} does not exist", path.display())).into());
        }
        Ok(path)
    }

    /// Like [`Config::input`] but `None` when neither is configured.
    pub fn optional_input(&self, name: &str, explicit: &Option<PathBuf>) -> Result<Option<PathBuf>> {
        match explicit {
            Some(p) if !p.exists() => Err(Failure::Usage(format!("{name} path {} does not exist", p.display())).into()),
            other => Ok(other.clone()),
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_document_keeps_defaults() {
        let cfg: Config = serde_json::from_str(r#"{"segmentation": {"max_iters": 4}, "seed": 9}"#).unwrap();
        assert_eq!(cfg.segmentation.max_iters, 4);
        assert_eq!(cfg.segmentation.grid, [50, 50]);
        assert_eq!(cfg.calibration_config().seed, 9);
        assert_eq!(cfg.eval.iou_threshold, DEFAULT_IOU_THRESHOLD);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"segmentaton": {}}"#).is_err());
    }
}
