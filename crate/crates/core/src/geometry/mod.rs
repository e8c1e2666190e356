//! Camera model, rotation algebra, IMU-driven horizon projection and the
//! camera-IMU calibration from a ground-plane point cloud.
//!
//! Frames are right-handed and camera-aligned: X to the right, Y down, Z
//! forward. The IMU's Z axis is assumed to coincide with the camera's optical
//! axis, so roll turns about Z, pitch about X and yaw about Y.

mod calibration;
mod camera;
mod horizon;
pub mod io;
mod rotation;

use std::f64::consts::PI;

use nalgebra::Vector3;

pub use calibration::{
    calibrate_camera_imu, fit_plane_ransac, rotation_from_ground_normal, CalibrationConfig,
    CalibrationResult, PlaneFit,
};
pub use camera::{CameraIntrinsics, UNDISTORT_MAX_ITERS, UNDISTORT_TOL_PX};
pub use horizon::{
    estimate_horizon, horizon_distance, horizon_world_points, project_point, HorizonLine,
    DEFAULT_ALPHA_H_DEG, HORIZON_DISTANCE_COEFF,
};
pub use rotation::RotationMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One attitude sample from the IMU, angles in radians relative to the water surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading<T: Real> {
    pub timestamp: T,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Real> ImuReading<T> {
    pub fn new(timestamp: T, roll: T, pitch: T, yaw: T) -> Result<Self> {
        let r = Self {
            timestamp,
            roll,
            pitch,
            yaw,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn level(timestamp: T) -> Self {
        Self {
            timestamp,
            roll: T::zero(),
            pitch: T::zero(),
            yaw: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pi = T::c(PI);
        for (name, a) in [("roll", self.roll), ("pitch", self.pitch), ("yaw", self.yaw)] {
            if !a.is_finite() {
                return Err(Error::InvalidInput(format!("IMU {name} is not finite")));
            }
            if a <= -pi || a > pi {
                return Err(Error::InvalidInput(format!("IMU {name} outside (-pi, pi]")));
            }
        }
        if !self.timestamp.is_finite() {
            return Err(Error::InvalidInput("IMU timestamp is not finite".into()));
        }
        Ok(())
    }

    /// Rotation taking IMU-frame vectors into the frame aligned with the water
    /// surface, `R_z(roll) * R_x(pitch) * R_y(yaw)`.
    ///
    /// Roll is applied last, so it rotates the projected horizon rigidly in
    /// the image; yaw turns about the vertical axis and therefore never moves
    /// the horizon. Positive roll gives a positive image slope (rows grow to
    /// the right), positive pitch raises the horizon.
    pub fn rotation(&self) -> RotationMatrix<T> {
        RotationMatrix::about_z(self.roll)
            * RotationMatrix::about_x(self.pitch)
            * RotationMatrix::about_y(self.yaw)
    }

    /// Same reading with `delta` added to roll.
    pub fn with_extra_roll(mut self, delta: T) -> Self {
        self.roll += delta;
        self
    }

    pub fn cast<U: Real>(&self) -> ImuReading<U> {
        ImuReading {
            timestamp: U::c(self.timestamp.as_f64()),
            roll: U::c(self.roll.as_f64()),
            pitch: U::c(self.pitch.as_f64()),
            yaw: U::c(self.yaw.as_f64()),
        }
    }
}

/// 3-D points in meters, camera frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud<T: Real> {
    pub points: Vec<Vector3<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vector3<T>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has non-finite coordinates")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imu_angle_range() {
        assert!(ImuReading::new(0.0, PI, 0.0, 0.0).is_ok());
        assert!(ImuReading::new(0.0, -PI, 0.0, 0.0).is_err());
        assert!(ImuReading::new(0.0, 0.0, f64::NAN, 0.0).is_err());
        assert!(ImuReading::new(0.0, 0.0, 0.0, 4.0).is_err());
    }

    #[test]
    fn point_cloud_rejects_nan() {
        assert!(PointCloud::new(vec![Vector3::new(0.0, f64::INFINITY, 1.0)]).is_err());
        assert_eq!(PointCloud::<f64>::new(vec![]).unwrap().len(), 0);
    }
}
