//! File formats for IMU logs, camera/calibration documents and point clouds.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CalibrationResult, CameraIntrinsics, ImuReading, PointCloud, RotationMatrix};
use crate::error::{Error, Result};

const IMU_HEADER: [&str; 4] = ["timestamp", "roll", "pitch", "yaw"];

/// Reads a `timestamp,roll,pitch,yaw` CSV log (radians). Timestamps must be
/// non-decreasing.
pub fn read_imu_csv(path: impl AsRef<Path>) -> Result<Vec<ImuReading<f64>>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(IMU_HEADER.iter().copied()) {
        return Err(Error::parse(path, "expected header `timestamp,roll,pitch,yaw`"));
    }
    let mut out: Vec<ImuReading<f64>> = Vec::new();
    for (line, rec) in rdr.deserialize::<(f64, f64, f64, f64)>().enumerate() {
        let (t, roll, pitch, yaw) = rec?;
        let reading = ImuReading::new(t, roll, pitch, yaw)
            .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
        if let Some(prev) = out.last() {
            if reading.timestamp < prev.timestamp {
                return Err(Error::parse(path, format!("row {}: timestamps not monotone", line + 1)));
            }
        }
        out.push(reading);
    }
    Ok(out)
}

pub fn write_imu_csv(path: impl AsRef<Path>, readings: &[ImuReading<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(IMU_HEADER)?;
    for r in readings {
        w.serialize((r.timestamp, r.roll, r.pitch, r.yaw))?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

/// Reads an `x,y,z` CSV point cloud (meters, camera frame). A zero-byte file
/// is an empty cloud.
pub fn read_point_cloud_csv(path: impl AsRef<Path>) -> Result<PointCloud<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(PointCloud::default());
    }
    if headers.iter().map(str::trim).ne(["x", "y", "z"]) {
        return Err(Error::parse(path, "expected header `x,y,z`"));
    }
    let mut points = Vec::new();
    for rec in rdr.deserialize::<(f64, f64, f64)>() {
        let (x, y, z) = rec?;
        points.push(Vector3::new(x, y, z));
    }
    PointCloud::new(points).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_point_cloud_csv(path: impl AsRef<Path>, cloud: &PointCloud<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["x", "y", "z"])?;
    for p in &cloud.points {
        w.serialize((p.x, p.y, p.z))?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

/// Intrinsics document, optionally carrying the calibrated rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDoc {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "R_cam_usv", default, skip_serializing_if = "Option::is_none")]
    pub r_cam_usv: Option<[f64; 9]>,
    #[serde(rename = "R_usv_imu", default, skip_serializing_if = "Option::is_none")]
    pub r_usv_imu: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlier_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_rms: Option<f64>,
}

impl CameraDoc {
    pub fn new(intr: &CameraIntrinsics<f64>, calib: Option<&CalibrationResult<f64>>) -> Self {
        Self {
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
            k1: intr.k1,
            k2: intr.k2,
            width: intr.width,
            height: intr.height,
            r_cam_usv: calib.map(|c| c.r_cam_usv.to_row_major()),
            r_usv_imu: calib.map(|c| c.r_usv_imu.to_row_major()),
            inlier_count: calib.map(|c| c.inlier_count),
            residual_rms: calib.map(|c| c.residual_rms),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics<f64>> {
        CameraIntrinsics::new(
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.width, self.height,
        )
    }

    /// Calibration stored in the document; identity rotations when absent.
    pub fn calibration(&self) -> Result<CalibrationResult<f64>> {
        let rot = |v: Option<[f64; 9]>| match v {
            Some(m) => RotationMatrix::from_row_major(m),
            None => Ok(RotationMatrix::identity()),
        };
        Ok(CalibrationResult {
            r_cam_usv: rot(self.r_cam_usv)?,
            r_usv_imu: rot(self.r_usv_imu)?,
            inlier_count: self.inlier_count.unwrap_or(3),
            residual_rms: self.residual_rms.unwrap_or(0.0),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}
