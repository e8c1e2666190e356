use anyhow::{Context, Result};
use nalgebra::Vector3;
use seahorizon::geometry::io::{read_imu_csv, read_point_cloud_csv};
use seahorizon::geometry::calibrate_camera_imu;
use seahorizon::{CalibrationResult, ImuReading};
use serde::{Deserialize, Serialize};

use crate::config::{write_text, Config};
use crate::Failure;

/// What `calibrate` writes and `detect --calibration` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    #[serde(rename = "R_cam_usv")]
    pub r_cam_usv: [f64; 9],
    #[serde(rename = "R_usv_imu")]
    pub r_usv_imu: [f64; 9],
    pub inlier_count: usize,
    pub residual_rms: f64,
    /// Unit ground normal in camera coordinates, pointing up.
    pub ground_normal: [f64; 3],
}

impl CalibrationDoc {
    pub fn new(c: &CalibrationResult) -> Self {
        let n = c.r_cam_usv.apply(&Vector3::new(0.0, -1.0, 0.0));
        Self {
            r_cam_usv: c.r_cam_usv.to_row_major(),
            r_usv_imu: c.r_usv_imu.to_row_major(),
            inlier_count: c.inlier_count,
            residual_rms: c.residual_rms,
            ground_normal: [n.x, n.y, n.z],
        }
    }

    pub fn result(&self) -> seahorizon::Result<CalibrationResult> {
        Ok(CalibrationResult {
            r_cam_usv: seahorizon::RotationMatrix::from_row_major(self.r_cam_usv)?,
            r_usv_imu: seahorizon::RotationMatrix::from_row_major(self.r_usv_imu)?,
            inlier_count: self.inlier_count,
            residual_rms: self.residual_rms,
        })
    }
}

pub fn run(cfg: &Config) -> Result<()> {
    let cloud_path = cfg.input("point cloud", &cfg.paths.cloud, |l| l.ground_cloud())?;
    let cloud = read_point_cloud_csv(&cloud_path).with_context(|| format!("reading {}", cloud_path.display()))?;
    if cloud.is_empty() {
        return Err(Failure::InsufficientData(format!("{} contains no points", cloud_path.display())).into());
    }
    let imu = match cfg.optional_input("IMU log", &cfg.paths.imu)? {
        Some(p) => *read_imu_csv(&p)
            .with_context(|| format!("reading {}", p.display()))?
            .first()
            .ok_or_else(|| Failure::InsufficientData(format!("{} has no readings", p.display())))?,
        None => ImuReading::level(0.0),
    };
    let result = calibrate_camera_imu(&cloud, &imu, &cfg.calibration_config()).map_err(|e| match e {
        seahorizon::Error::InsufficientData(m) => Failure::InsufficientData(format!("{}: {m}", cloud_path.display())),
        seahorizon::Error::CalibrationFailed(m) => Failure::CalibrationFailed(format!("{}: {m}", cloud_path.display())),
        other => Failure::Usage(format!("{}: {other}", cloud_path.display())),
    })?;
    log::info!(
        "{} inliers of {} points, residual RMS {:.3e} m",
        result.inlier_count,
        cloud.len(),
        result.residual_rms
    );
    let text = serde_json::to_string_pretty(&CalibrationDoc::new(&result))? + "\n";
    match &cfg.paths.output {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
