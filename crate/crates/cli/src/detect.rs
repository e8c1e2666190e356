use std::path::PathBuf;

use anyhow::{Context, Result};
use image::RgbImage;
use seahorizon::detection::{Camera, DetectionRecord};
use seahorizon::geometry::io::{read_imu_csv, CameraDoc};
use seahorizon::pipeline::{discover_frames, FrameDiagnostics, MonoDetector, StereoDetector};
use seahorizon::stereo::StereoDoc;
use seahorizon::{CalibrationResult, CameraIntrinsics, ImuReading};
use serde::Serialize;

use crate::calibrate::CalibrationDoc;
use crate::config::{write_text, Config};
use crate::{Failure, Mode};

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub frame: usize,
    pub camera: Camera,
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StereoDiagnostics {
    pub frame: usize,
    pub pairs: usize,
    pub rescued: usize,
    pub verified: usize,
    pub verification_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub mode: String,
    pub frames: usize,
    pub processed: usize,
    pub skipped: Vec<Skipped>,
    pub per_frame: Vec<FrameDiagnostics>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stereo: Vec<StereoDiagnostics>,
}

struct Sequence {
    frames: Vec<(usize, PathBuf, Option<PathBuf>)>,
    imu: Vec<ImuReading>,
    camera: (CameraIntrinsics, CalibrationResult),
    stereo: Option<StereoDoc>,
}

impl Sequence {
    fn open(cfg: &Config, mode: Mode) -> Result<Self> {
        let left_dir = cfg.input("left frame directory", &cfg.paths.left, |l| l.frames_dir(Camera::Left))?;
        let left = discover_frames(&left_dir).with_context(|| format!("listing {}", left_dir.display()))?;
        let right = match mode {
            Mode::Mono => None,
            Mode::Stereo => {
                let dir = cfg.input("right frame directory", &cfg.paths.right, |l| l.frames_dir(Camera::Right))?;
                Some(discover_frames(&dir).with_context(|| format!("listing {}", dir.display()))?)
            }
        };
        if left.is_empty() {
            return Ok(Self {
                frames: Vec::new(),
                imu: Vec::new(),
                camera: (CameraIntrinsics::pinhole(1.0, 2, 2)?, CalibrationResult::identity()),
                stereo: None,
            });
        }
        let frames: Vec<_> = match right {
            None => left.into_iter().map(|(i, p)| (i, p, None)).collect(),
            Some(right) => {
                let li: Vec<usize> = left.iter().map(|f| f.0).collect();
                let ri: Vec<usize> = right.iter().map(|f| f.0).collect();
                if li != ri {
                    return Err(Failure::CountMismatch(format!(
                        "{} left frames and {} right frames do not share indices",
                        li.len(),
                        ri.len()
                    ))
                    .into());
                }
                left.into_iter().zip(right).map(|((i, l), (_, r))| (i, l, Some(r))).collect()
            }
        };
        let imu_path = cfg.input("IMU log", &cfg.paths.imu, |l| l.imu())?;
        let imu = read_imu_csv(&imu_path).with_context(|| format!("reading {}", imu_path.display()))?;
        if imu.len() != frames.len() {
            return Err(Failure::CountMismatch(format!(
                "{} frames but {} IMU readings in {}",
                frames.len(),
                imu.len(),
                imu_path.display()
            ))
            .into());
        }
        let cam_path = cfg.input("camera", &cfg.paths.camera, |l| l.camera())?;
        let doc = CameraDoc::read(&cam_path)?;
        let intr = doc.intrinsics().with_context(|| format!("camera {}", cam_path.display()))?;
        let calib = match cfg.optional_input("calibration", &cfg.paths.calibration)? {
            Some(p) => {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let doc: CalibrationDoc = serde_json::from_str(&text)
                    .map_err(|e| Failure::Unparseable(format!("{}: {e}", p.display())))?;
                doc.result()?
            }
            None => doc.calibration()?,
        };
        let stereo = match mode {
            Mode::Mono => None,
            Mode::Stereo => Some(StereoDoc::read(cfg.input("stereo rig", &cfg.paths.stereo, |l| l.stereo())?)?),
        };
        Ok(Self {
            frames,
            imu,
            camera: (intr, calib),
            stereo,
        })
    }
}

fn load(path: &PathBuf) -> std::result::Result<RgbImage, String> {
    image::open(path).map(|i| i.to_rgb8()).map_err(|e| e.to_string())
}

/// Runs the pipeline over at most `limit` frames.
fn process(cfg: &Config, mode: Mode, limit: Option<usize>) -> Result<(Vec<DetectionRecord>, Diagnostics)> {
    let seq = Sequence::open(cfg, mode)?;
    let mut diag = Diagnostics {
        mode: format!("{mode:?}").to_lowercase(),
        frames: seq.frames.len(),
        ..Default::default()
    };
    let mut records = Vec::new();
    if seq.frames.is_empty() {
        log::info!("0 frames");
        return Ok((records, diag));
    }
    log::info!("{} frames, {} mode", seq.frames.len(), diag.mode);
    let pipeline = cfg.pipeline()?;
    let n = limit.unwrap_or(usize::MAX).min(seq.frames.len());
    match &seq.stereo {
        None => {
            let mut det = MonoDetector::new(pipeline, seq.camera.0, seq.camera.1, Camera::Left)?;
            for (k, (frame, path, _)) in seq.frames.iter().take(n).enumerate() {
                let img = match load(path) {
                    Ok(i) => i,
                    Err(e) => {
                        skip(*frame, Camera::Left, path, e, &mut diag);
                        continue;
                    }
                };
                let out = det.process(*frame, &img, &seq.imu[k])?;
                records.push(DetectionRecord::new(*frame, Camera::Left, &out.detections, Some(out.edge)));
                diag.per_frame.push(out.diagnostics);
                diag.processed += 1;
            }
        }
        Some(rig) => {
            let geometry = rig.geometry(&seq.camera.0, &seq.camera.0)?;
            let mut det = StereoDetector::new(pipeline, seq.camera, seq.camera, geometry)?;
            for (k, (frame, lpath, rpath)) in seq.frames.iter().take(n).enumerate() {
                let rpath = rpath.as_ref().expect("stereo frames carry both paths");
                let (l, r) = (load(lpath), load(rpath));
                let (l, r) = match (l, r) {
                    (Ok(l), Ok(r)) => (l, r),
                    (l, r) => {
                        if let Err(e) = l {
                            skip(*frame, Camera::Left, lpath, e, &mut diag);
                        }
                        if let Err(e) = r {
                            skip(*frame, Camera::Right, rpath, e, &mut diag);
                        }
                        continue;
                    }
                };
                let out = det.process(*frame, &l, &r, &seq.imu[k])?;
                records.extend(out.records(*frame));
                diag.stereo.push(StereoDiagnostics {
                    frame: *frame,
                    pairs: out.outcome.matches.pairs.len(),
                    rescued: out.outcome.rescued_left.iter().chain(&out.outcome.rescued_right).filter(|r| r.accepted()).count(),
                    verified: out.outcome.verified.len(),
                    verification_ms: out.verification_ms,
                });
                diag.per_frame.push(out.left.diagnostics);
                diag.per_frame.push(out.right.diagnostics);
                diag.processed += 1;
            }
        }
    }
    if !diag.skipped.is_empty() {
        log::warn!("{} unreadable frame files skipped", diag.skipped.len());
    }
    Ok((records, diag))
}

fn skip(frame: usize, camera: Camera, path: &PathBuf, reason: String, diag: &mut Diagnostics) {
    log::warn!("skipping frame {frame} ({}): {}: {reason}", camera.name(), path.display());
    diag.skipped.push(Skipped {
        frame,
        camera,
        path: path.clone(),
        reason,
    });
}

pub fn run(cfg: &Config, mode: Mode) -> Result<()> {
    let (records, diag) = process(cfg, mode, None)?;
    let text = serde_json::to_string(&records)? + "\n";
    match &cfg.paths.output {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &cfg.paths.diagnostics {
        write_text(p, &(serde_json::to_string_pretty(&diag)? + "\n"))?;
    }
    log::info!("{} of {} frames processed", diag.processed, diag.frames);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct StageSummary {
    mode: String,
    frames: usize,
    /// Median milliseconds per frame and stage; segmentation and detection
    /// are summed over cameras.
    segmentation_ms: f64,
    detection_ms: f64,
    verification_ms: f64,
    /// Median wall-clock milliseconds per frame.
    delta_t_ms: f64,
    /// Frames per second at the median frame time.
    omega_fps: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn summarize(mode: Mode, diag: &Diagnostics) -> StageSummary {
    let per_camera = if mode == Mode::Stereo { 2 } else { 1 };
    let frames: Vec<&[FrameDiagnostics]> = diag.per_frame.chunks(per_camera).collect();
    let stage = |f: fn(&FrameDiagnostics) -> f64| median(frames.iter().map(|c| c.iter().map(f).sum()).collect());
    let verify = median(diag.stereo.iter().map(|s| s.verification_ms).collect());
    let verify = if mode == Mode::Stereo { verify } else { 0.0 };
    // cameras are fitted concurrently, so a frame takes as long as its slower side
    let total = median(
        frames
            .iter()
            .zip(diag.stereo.iter().map(|s| s.verification_ms).chain(std::iter::repeat(0.0)))
            .map(|(c, v)| {
                c.iter()
                    .map(|d| d.timings.segmentation_ms + d.timings.detection_ms)
                    .fold(0.0, f64::max)
                    + v
            })
            .collect(),
    );
    StageSummary {
        mode: diag.mode.clone(),
        frames: frames.len(),
        segmentation_ms: stage(|d| d.timings.segmentation_ms),
        detection_ms: stage(|d| d.timings.detection_ms),
        verification_ms: verify,
        delta_t_ms: total,
        omega_fps: 1e3 / total,
    }
}

pub fn bench(cfg: &Config, limit: Option<usize>) -> Result<()> {
    let mut rows = Vec::new();
    for mode in [Mode::Mono, Mode::Stereo] {
        let (_, diag) = process(cfg, mode, limit)?;
        if diag.processed == 0 {
            log::info!("{:?}: nothing to time", mode);
            continue;
        }
        rows.push(summarize(mode, &diag));
    }
    println!("{:<8} {:>7} {:>10} {:>10} {:>10} {:>10} {:>8}", "mode", "frames", "seg [ms]", "det [ms]", "ver [ms]", "dt [ms]", "w [fps]");
    for r in &rows {
        println!(
            "{:<8} {:>7} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>8.2}",
            r.mode, r.frames, r.segmentation_ms, r.detection_ms, r.verification_ms, r.delta_t_ms, r.omega_fps
        );
    }
    if let Some(p) = &cfg.paths.output {
        write_text(p, &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    }
    Ok(())
}
