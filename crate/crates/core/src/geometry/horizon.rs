use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector2, Vector3};

use super::calibration::CalibrationResult;
use super::camera::CameraIntrinsics;
use super::ImuReading;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Distance to the geometric horizon is `HORIZON_DISTANCE_COEFF * sqrt(h)` meters.
pub const HORIZON_DISTANCE_COEFF: f64 = 3.57e3;
/// Default horizontal angle of the two generated horizon points.
pub const DEFAULT_ALPHA_H_DEG: f64 = 40.0;

/// Distance (meters) at which horizon points are generated for a camera
/// `camera_height` meters above the water.
pub fn horizon_distance<T: Real>(camera_height: T) -> T {
    T::c(HORIZON_DISTANCE_COEFF) * camera_height.sqrt()
}

/// Image-space horizon.
///
/// The line passes through `(anchor_col, intercept_row)` with slope angle
/// `angle` (image rows grow downward, so a positive angle descends to the
/// right). `anchor_col` is the principal-point column of the camera that
/// produced the line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonLine<T: Real> {
    pub angle: T,
    pub intercept_row: T,
    pub anchor_col: T,
    pub valid: bool,
}

impl<T: Real> HorizonLine<T> {
    pub fn new(angle: T, intercept_row: T, anchor_col: T) -> Self {
        let valid = angle.is_finite()
            && intercept_row.is_finite()
            && anchor_col.is_finite()
            && angle.abs() < T::c(FRAC_PI_2);
        Self {
            angle,
            intercept_row,
            anchor_col,
            valid,
        }
    }

    pub fn horizontal(row: T) -> Self {
        Self::new(T::zero(), row, T::zero())
    }

    pub fn invalid() -> Self {
        Self {
            angle: T::zero(),
            intercept_row: T::zero(),
            anchor_col: T::zero(),
            valid: false,
        }
    }

    /// Line through two points; invalid when they share a column.
    pub fn through(p1: Vector2<T>, p2: Vector2<T>, anchor_col: T) -> Self {
        let du = p2.x - p1.x;
        let dv = p2.y - p1.y;
        let finite = p1.iter().chain(p2.iter()).all(|v| v.is_finite());
        if !finite || du.abs() <= T::default_epsilon() * (T::one() + p1.x.abs()) {
            return Self::invalid();
        }
        let slope = dv / du;
        Self::new(slope.atan(), p1.y + slope * (anchor_col - p1.x), anchor_col)
    }

    pub fn slope(&self) -> T {
        self.angle.tan()
    }

    pub fn row_at(&self, col: T) -> T {
        self.intercept_row + self.slope() * (col - self.anchor_col)
    }

    /// Maps the line onto a raster resampled by factors `(sx, sy)`, where a
    /// pixel center `x` maps to `(x + 0.5) * s - 0.5`.
    pub fn rescaled(&self, sx: T, sy: T) -> Self {
        if !self.valid {
            return *self;
        }
        let half = T::c(0.5);
        let map = |x: T, s: T| (x + half) * s - half;
        let slope = self.slope() * sy / sx;
        Self::new(
            slope.atan(),
            map(self.intercept_row, sy),
            map(self.anchor_col, sx),
        )
    }

    /// Same line shifted by `rows` pixels (positive moves it down).
    pub fn shifted(&self, rows: T) -> Self {
        Self {
            intercept_row: self.intercept_row + rows,
            ..*self
        }
    }

    pub fn cast<U: Real>(&self) -> HorizonLine<U> {
        HorizonLine {
            angle: U::c(self.angle.as_f64()),
            intercept_row: U::c(self.intercept_row.as_f64()),
            anchor_col: U::c(self.anchor_col.as_f64()),
            valid: self.valid,
        }
    }
}

/// Two points on the IMU's XZ-plane at horizontal angles `-alpha_h` and
/// `+alpha_h` and depth `l_dist`, rotated into the USV frame by
/// `R_imu * R_usv_imu^-1`.
pub fn horizon_world_points<T: Real>(
    imu: &ImuReading<T>,
    calib: &CalibrationResult<T>,
    alpha_h: T,
    camera_height: T,
) -> Result<[Vector3<T>; 2]> {
    imu.validate()?;
    if !(alpha_h > T::zero() && alpha_h < T::c(FRAC_PI_2)) {
        return Err(Error::InvalidInput("alpha_h must lie in (0, pi/2)".into()));
    }
    if !(camera_height > T::zero()) || !camera_height.is_finite() {
        return Err(Error::InvalidInput("camera height must be positive".into()));
    }
    let depth = horizon_distance(camera_height);
    let lateral = depth * alpha_h.tan();
    let to_usv = imu.rotation() * calib.r_usv_imu.inverse();
    Ok([
        to_usv.apply(&Vector3::new(-lateral, T::zero(), depth)),
        to_usv.apply(&Vector3::new(lateral, T::zero(), depth)),
    ])
}

/// Projects a USV-frame point through `K * R_cam_usv` and the radial model.
pub fn project_point<T: Real>(
    point: &Vector3<T>,
    calib: &CalibrationResult<T>,
    intr: &CameraIntrinsics<T>,
) -> Result<Vector2<T>> {
    let cam = calib.r_cam_usv.apply(point);
    if !(cam.z > T::zero()) {
        return Err(Error::BehindCamera {
            depth: cam.z.as_f64(),
        });
    }
    let normalized = Vector2::new(cam.x / cam.z, cam.y / cam.z);
    Ok(intr.normalized_to_pixel(intr.distort_normalized(normalized)))
}

/// Horizon line from the current IMU attitude: the line through the two
/// projected, radially distorted horizon points.
///
/// Points behind the camera or non-finite projections yield an invalid line
/// rather than an error.
pub fn estimate_horizon<T: Real>(
    imu: &ImuReading<T>,
    calib: &CalibrationResult<T>,
    intr: &CameraIntrinsics<T>,
    alpha_h: T,
    camera_height: T,
) -> Result<HorizonLine<T>> {
    let [x1, x2] = horizon_world_points(imu, calib, alpha_h, camera_height)?;
    let (p1, p2) = match (
        project_point(&x1, calib, intr),
        project_point(&x2, calib, intr),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Ok(HorizonLine::invalid()),
    };
    Ok(HorizonLine::through(p1, p2, intr.cx))
}
