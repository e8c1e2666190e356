//! Per-frame detection: horizon-conditioned segmentation with warm start,
//! obstacle extraction, and optional stereo verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::detection::{
    extract_obstacle_map, suppress_and_box, water_edge, water_mask, Camera, Detection, DetectionRecord, WaterEdge,
};
use crate::error::{Error, Result};
use crate::geometry::{estimate_horizon, CalibrationResult, CameraIntrinsics, HorizonLine, ImuReading};
use crate::segmentation::{
    build_conditional_priors, build_hyper_priors, em_fit, EmParams, FeatureImage, HyperPriorSet, MeanUpdate,
    MixtureModel, MrfKernel,
};
use crate::stereo::{verify_stereo, StereoGeometry, StereoOutcome, VerificationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Working grid `[columns, rows]`.
    pub grid: [usize; 2],
    pub max_iters: usize,
    pub tol: f64,
    /// Prior-mask blur, working-grid pixels.
    pub blur_sigma: f64,
    pub mrf_sigma: f64,
    /// Vertical offsets of the sky, middle and water means from the horizon,
    /// fraction of image height.
    pub displacements: [f64; 3],
    /// Horizontal angle of the generated horizon points, radians.
    pub alpha_h: f64,
    /// Camera height above the water, meters.
    pub camera_height: f64,
    pub literal_mean_update: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        let template = HyperPriorSet::<f64>::default_template();
        Self {
            grid: [50, 50],
            max_iters: 10,
            tol: 1e-3,
            blur_sigma: 2.0,
            mrf_sigma: 1.0,
            displacements: template.displacements,
            alpha_h: 30f64.to_radians(),
            camera_height: 0.7,
            literal_mean_update: false,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.grid[0] < 3 || self.grid[1] < 3 {
            return bad("working grid must be at least 3x3");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.blur_sigma >= 0.0) || !(self.mrf_sigma > 0.0) {
            return bad("blur_sigma must be non-negative and mrf_sigma positive");
        }
        if !(self.alpha_h > 0.0 && self.alpha_h < std::f64::consts::FRAC_PI_2) {
            return bad("alpha_h must lie in (0, pi/2)");
        }
        if !(self.camera_height > 0.0) {
            return bad("camera_height must be positive");
        }
        if !self.displacements.iter().all(|d| d.is_finite()) {
            return bad("displacements must be finite");
        }
        Ok(())
    }

    fn template(&self) -> HyperPriorSet<f64> {
        HyperPriorSet {
            displacements: self.displacements,
            ..HyperPriorSet::default_template()
        }
    }

    fn em_params(&self) -> EmParams<f64> {
        EmParams {
            max_iters: self.max_iters,
            tol: self.tol,
            mean_update: if self.literal_mean_update {
                MeanUpdate::Literal
            } else {
                MeanUpdate::Conjugate
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Blobs smaller than this (full-resolution pixels) are dropped.
    pub min_area: usize,
    /// Boxes closer than this (pixels, edge to edge) are merged.
    pub merge_dist: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            min_area: 25,
            merge_dist: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segmentation: SegmentationConfig,
    pub detection: DetectionConfig,
    pub stereo: VerificationConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.stereo.validate()?;
        if !(self.detection.merge_dist >= 0.0) {
            return Err(Error::InvalidInput("merge_dist must be non-negative".into()));
        }
        Ok(())
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub segmentation_ms: f64,
    pub detection_ms: f64,
    pub verification_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.segmentation_ms + self.detection_ms + self.verification_ms
    }
}

/// What the segmentation carried over from the previous frame and where it
/// ended up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub camera: Camera,
    /// Frame whose fitted model seeded this one.
    pub warm_start_from: Option<usize>,
    /// Component means `[u, v, r, g, b]` at the start and end of the fit.
    pub initial_means: [[f64; 5]; 3],
    pub final_means: [[f64; 5]; 3],
    /// Mean absolute difference between the carried and the new posteriors.
    pub posterior_change: f64,
    pub iterations: usize,
    pub converged: bool,
    pub horizon_valid: bool,
    pub detections: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub detections: Vec<Detection>,
    pub edge: WaterEdge,
    pub horizon: HorizonLine<f64>,
    pub diagnostics: FrameDiagnostics,
}

fn means(model: &MixtureModel<f64>) -> [[f64; 5]; 3] {
    std::array::from_fn(|k| std::array::from_fn(|d| model.components[k].mean[d]))
}

/// Single-camera detector keeping the previous frame's model.
#[derive(Debug, Clone)]
pub struct MonoDetector {
    pub config: PipelineConfig,
    pub intrinsics: CameraIntrinsics<f64>,
    pub calibration: CalibrationResult<f64>,
    pub camera: Camera,
    previous: Option<(usize, MixtureModel<f64>)>,
    kernel: MrfKernel<f64>,
}

impl MonoDetector {
    pub fn new(
        config: PipelineConfig,
        intrinsics: CameraIntrinsics<f64>,
        calibration: CalibrationResult<f64>,
        camera: Camera,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kernel: MrfKernel::gaussian(config.segmentation.mrf_sigma),
            config,
            intrinsics,
            calibration,
            camera,
            previous: None,
        })
    }

    pub fn model(&self) -> Option<&MixtureModel<f64>> {
        self.previous.as_ref().map(|(_, m)| m)
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn process(&mut self, frame: usize, img: &RgbImage, imu: &ImuReading<f64>) -> Result<FrameResult> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if img.dimensions() != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "frame {frame} is {}x{}, camera is {w}x{h}",
                img.width(),
                img.height()
            )));
        }
        let seg = &self.config.segmentation;
        let [gw, gh] = seg.grid;
        let t0 = Instant::now();
        let horizon = estimate_horizon(imu, &self.calibration, &self.intrinsics, seg.alpha_h, seg.camera_height)?;
        let grid_line = horizon.rescaled(gw as f64 / w as f64, gh as f64 / h as f64);
        let feats = FeatureImage::from_rgb(img, gw, gh)?;
        let masks = build_conditional_priors(&grid_line, gw, gh, seg.blur_sigma);
        let hyp = build_hyper_priors(&grid_line, gw, gh, &seg.template());
        let warm = self.previous.as_ref().map(|(_, m)| m);
        let initial = warm.cloned().unwrap_or_else(|| MixtureModel::initial(gw, gh, &hyp));
        let model = em_fit(&feats, &masks, &hyp, warm, &self.kernel, &seg.em_params())?;
        let t1 = Instant::now();

        let mask = water_mask(&model.posteriors, gw, gh)?.upsample(w as usize, h as usize);
        let map = extract_obstacle_map(&mask);
        let det = &self.config.detection;
        let detections = suppress_and_box(&map, self.camera, det.min_area, det.merge_dist);
        let edge = water_edge(&map);
        let t2 = Instant::now();

        let posterior_change = initial
            .posteriors
            .iter()
            .zip(&model.posteriors)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .sum::<f64>()
            / (model.posteriors.len() * 4) as f64;
        let diagnostics = FrameDiagnostics {
            frame,
            camera: self.camera,
            warm_start_from: self.previous.as_ref().map(|(f, _)| *f),
            initial_means: means(&initial),
            final_means: means(&model),
            posterior_change,
            iterations: model.iterations,
            converged: model.converged,
            horizon_valid: horizon.valid,
            detections: detections.len(),
            timings: StageTimings {
                segmentation_ms: (t1 - t0).as_secs_f64() * 1e3,
                detection_ms: (t2 - t1).as_secs_f64() * 1e3,
                verification_ms: 0.0,
            },
        };
        self.previous = Some((frame, model));
        Ok(FrameResult {
            detections,
            edge,
            horizon,
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrameResult {
    pub left: FrameResult,
    pub right: FrameResult,
    pub outcome: StereoOutcome,
    pub verification_ms: f64,
}

impl StereoFrameResult {
    pub fn records(&self, frame: usize) -> [DetectionRecord; 2] {
        [
            self.outcome.verified.record(frame, Camera::Left, Some(self.left.edge.clone())),
            self.outcome.verified.record(frame, Camera::Right, Some(self.right.edge.clone())),
        ]
    }
}

/// Two mono detectors fitted concurrently, followed by stereo verification.
#[derive(Debug, Clone)]
pub struct StereoDetector {
    pub left: MonoDetector,
    pub right: MonoDetector,
    pub geometry: StereoGeometry,
    pub verification: VerificationConfig,
}

impl StereoDetector {
    /// The NCC search margin is raised to at least one working-grid cell,
    /// since detection boxes are quantized to cells.
    pub fn new(
        config: PipelineConfig,
        left: (CameraIntrinsics<f64>, CalibrationResult<f64>),
        right: (CameraIntrinsics<f64>, CalibrationResult<f64>),
        geometry: StereoGeometry,
    ) -> Result<Self> {
        let [gw, gh] = config.segmentation.grid;
        let cell = (left.0.width.div_ceil(gw as u32), left.0.height.div_ceil(gh as u32));
        let mut verification = config.stereo;
        verification.search_margin = (verification.search_margin.0.max(cell.0), verification.search_margin.1.max(cell.1));
        Ok(Self {
            left: MonoDetector::new(config, left.0, left.1, Camera::Left)?,
            right: MonoDetector::new(config, right.0, right.1, Camera::Right)?,
            geometry,
            verification,
        })
    }

    pub fn process(
        &mut self,
        frame: usize,
        left_img: &RgbImage,
        right_img: &RgbImage,
        imu: &ImuReading<f64>,
    ) -> Result<StereoFrameResult> {
        let (l, r) = (&mut self.left, &mut self.right);
        let (left, right) = thread::scope(|s| {
            let handle = s.spawn(|| r.process(frame, right_img, imu));
            let left = l.process(frame, left_img, imu);
            (left, handle.join().expect("right camera fit panicked"))
        });
        let (mut left, mut right) = (left?, right?);
        let t0 = Instant::now();
        let outcome = verify_stereo(
            &left.detections,
            &right.detections,
            left_img,
            right_img,
            &self.geometry,
            &self.verification,
        )?;
        let verification_ms = t0.elapsed().as_secs_f64() * 1e3;
        left.diagnostics.timings.verification_ms = verification_ms;
        right.diagnostics.timings.verification_ms = verification_ms;
        Ok(StereoFrameResult {
            left,
            right,
            outcome,
            verification_ms,
        })
    }
}

/// Frames named by a zero-padded index (`000042.png`), sorted by index.
/// Files with other names are ignored.
pub fn discover_frames(dir: impl AsRef<Path>) -> Result<Vec<(usize, PathBuf)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("png")) != Some(true) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        if let Ok(index) = stem.parse::<usize>() {
            out.push((index, path));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_frame, ObstacleSpec, SceneSpec};
    use crate::stereo::StereoDoc;

    fn scene() -> SceneSpec {
        SceneSpec {
            width: 400,
            height: 300,
            focal: 300.0,
            frames: 3,
            middle_height: 40.0,
            obstacles: vec![ObstacleSpec::floating(0.0, 8.0, [1.6, 1.2], [220, 60, 30], 2.0)],
            ..Default::default()
        }
    }

    #[test]
    fn mono_detects_obstacle_and_warm_starts() {
        let spec = scene();
        let intr = CameraIntrinsics::pinhole(spec.focal, spec.width, spec.height).unwrap();
        let mut det = MonoDetector::new(PipelineConfig::default(), intr, CalibrationResult::identity(), Camera::Left).unwrap();
        for i in 0..spec.frames {
            let f = render_frame(&spec, i).unwrap();
            let out = det.process(i, &f.left, &f.imu).unwrap();
            let gt = f.truth[0].boxes()[0];
            assert!(out.detections.iter().any(|d| d.bbox.iou(&gt) >= 0.3), "{:?} vs {gt:?}", out.detections);
            assert_eq!(out.diagnostics.warm_start_from, i.checked_sub(1));
        }
    }

    #[test]
    fn stereo_pairs_obstacle() {
        let spec = scene();
        let intr = CameraIntrinsics::pinhole(spec.focal, spec.width, spec.height).unwrap();
        let calib = CalibrationResult::identity();
        let geom = StereoDoc::parallel(spec.baseline).geometry(&intr, &intr).unwrap();
        let mut det = StereoDetector::new(PipelineConfig::default(), (intr, calib), (intr, calib), geom).unwrap();
        let f = render_frame(&spec, 0).unwrap();
        let out = det.process(0, &f.left, &f.right, &f.imu).unwrap();
        assert_eq!(out.outcome.matches.pairs.len(), 1, "{:?}", out.outcome);
        assert!(out.outcome.matches.pairs[0].peak >= 0.95);
    }

    #[test]
    fn frame_discovery_skips_other_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["000002.png", "000000.png", "notes.txt", "a1.png", "000001.PNG"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let found: Vec<usize> = discover_frames(dir.path()).unwrap().into_iter().map(|(i, _)| i).collect();
        assert_eq!(found, vec![0, 1, 2]);
    }
}
