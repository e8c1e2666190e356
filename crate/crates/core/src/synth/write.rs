use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::render::{ground_cloud, render_frame};
use super::SceneSpec;
use crate::detection::Camera;
use crate::error::{Error, Result};
use crate::geometry::io::{write_imu_csv, write_point_cloud_csv, CameraDoc};
use crate::geometry::{CalibrationResult, CameraIntrinsics, ImuReading};
use crate::stereo::StereoDoc;

/// File locations inside a sequence directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

pub fn frame_name(index: usize) -> String {
    format!("{index:06}")
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn frames_dir(&self, camera: Camera) -> PathBuf {
        self.root.join(camera.name())
    }

    pub fn frame(&self, camera: Camera, index: usize) -> PathBuf {
        self.frames_dir(camera).join(format!("{}.png", frame_name(index)))
    }

    pub fn annotations_dir(&self, camera: Camera) -> PathBuf {
        self.root.join("annotations").join(camera.name())
    }

    pub fn annotation(&self, camera: Camera, index: usize) -> PathBuf {
        self.annotations_dir(camera).join(format!("{}.json", frame_name(index)))
    }

    pub fn imu(&self) -> PathBuf {
        self.root.join("imu.csv")
    }

    pub fn camera(&self) -> PathBuf {
        self.root.join("camera.json")
    }

    pub fn stereo(&self) -> PathBuf {
        self.root.join("stereo.json")
    }

    pub fn ground_cloud(&self) -> PathBuf {
        self.root.join("ground_cloud.csv")
    }

    pub fn ground_cloud_outliers(&self) -> PathBuf {
        self.root.join("ground_cloud_outliers.csv")
    }

    pub fn scene(&self) -> PathBuf {
        self.root.join("scene.json")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub frames: usize,
    /// Obstacle boxes annotated in the left view, summed over frames.
    pub left_obstacles: usize,
    pub right_obstacles: usize,
}

/// Renders the whole sequence into `dir`: PNG frames per camera, per-frame
/// annotations, the IMU log, camera and rig documents, and calibration
/// point-cloud fixtures. Frames are rendered on all available cores; output
/// is independent of scheduling.
pub fn write_dataset(spec: &SceneSpec, dir: impl AsRef<Path>) -> Result<DatasetSummary> {
    spec.validate()?;
    let layout = DatasetLayout::new(dir.as_ref());
    for camera in [Camera::Left, Camera::Right] {
        for d in [layout.frames_dir(camera), layout.annotations_dir(camera)] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(spec.frames.max(1));
    let slots: Mutex<Vec<Option<(ImuReading<f64>, usize, usize)>>> = Mutex::new(vec![None; spec.frames]);
    let results: Vec<Result<()>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|k| {
                let (layout, slots) = (&layout, &slots);
                s.spawn(move || -> Result<()> {
                    for i in (k..spec.frames).step_by(workers) {
                        let f = render_frame(spec, i)?;
                        for camera in [Camera::Left, Camera::Right] {
                            let path = layout.frame(camera, i);
                            f.image(camera).save(&path).map_err(|e| match e {
                                image::ImageError::IoError(io) => Error::io(&path, io),
                                other => Error::Image(other),
                            })?;
                            f.truth(camera).write(layout.annotation(camera, i))?;
                        }
                        let counts = (f.truth[0].obstacles().count(), f.truth[1].obstacles().count());
                        slots.lock().expect("no panics while holding the lock")[i] = Some((f.imu, counts.0, counts.1));
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("render worker panicked")).collect()
    });
    for r in results {
        r?;
    }
    let slots = slots.into_inner().expect("workers finished");
    let mut imu = Vec::with_capacity(spec.frames);
    let (mut left, mut right) = (0, 0);
    for (imu_reading, l, r) in slots.into_iter().flatten() {
        imu.push(imu_reading);
        left += l;
        right += r;
    }
    write_imu_csv(layout.imu(), &imu)?;
    let intr = CameraIntrinsics::pinhole(spec.focal, spec.width, spec.height)?;
    CameraDoc::new(&intr, Some(&CalibrationResult::identity())).write(layout.camera())?;
    StereoDoc::parallel(spec.baseline).write(layout.stereo())?;
    write_point_cloud_csv(layout.ground_cloud(), &ground_cloud(spec.camera_height, 1000, 0.0, 2e-4, spec.seed)?)?;
    write_point_cloud_csv(
        layout.ground_cloud_outliers(),
        &ground_cloud(spec.camera_height, 1000, 0.3, 2e-4, spec.seed ^ 1)?,
    )?;
    let scene = layout.scene();
    fs::write(&scene, serde_json::to_string_pretty(spec)? + "\n").map_err(|e| Error::io(&scene, e))?;
    Ok(DatasetSummary {
        frames: spec.frames,
        left_obstacles: left,
        right_obstacles: right,
    })
}
