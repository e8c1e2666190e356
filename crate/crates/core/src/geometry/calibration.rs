use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rotation::RotationMatrix;
use super::{ImuReading, PointCloud};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rotations relating camera, USV and IMU frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult<T: Real> {
    /// USV frame to camera frame.
    pub r_cam_usv: RotationMatrix<T>,
    /// IMU attitude at rest on level ground.
    pub r_usv_imu: RotationMatrix<T>,
    pub inlier_count: usize,
    /// RMS point-to-plane distance of the inliers, meters.
    pub residual_rms: T,
}

impl<T: Real> CalibrationResult<T> {
    /// Camera, USV and IMU axes all aligned.
    pub fn identity() -> Self {
        Self {
            r_cam_usv: RotationMatrix::identity(),
            r_usv_imu: RotationMatrix::identity(),
            inlier_count: 3,
            residual_rms: T::zero(),
        }
    }

    pub fn cast<U: Real>(&self) -> CalibrationResult<U> {
        CalibrationResult {
            r_cam_usv: self.r_cam_usv.cast(),
            r_usv_imu: self.r_usv_imu.cast(),
            inlier_count: self.inlier_count,
            residual_rms: U::c(self.residual_rms.as_f64()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig<T: Real> {
    /// Only points within this range of the camera are used (meters).
    pub dist_threshold: T,
    /// Point-to-plane distance for a RANSAC inlier (meters).
    pub inlier_tol: T,
    pub max_iters: usize,
    /// Minimum fraction of candidate points that must support the plane.
    pub min_inlier_ratio: T,
    pub seed: u64,
}

impl<T: Real> Default for CalibrationConfig<T> {
    fn default() -> Self {
        Self {
            dist_threshold: T::c(10.0),
            inlier_tol: T::c(1.0),
            max_iters: 1000,
            min_inlier_ratio: T::c(0.2),
            seed: 0,
        }
    }
}

/// Plane `normal . x + offset = 0` with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit<T: Real> {
    pub normal: Vector3<T>,
    pub offset: T,
    pub inliers: Vec<usize>,
    pub residual_rms: T,
}

impl<T: Real> PlaneFit<T> {
    pub fn distance(&self, p: &Vector3<T>) -> T {
        (self.normal.dot(p) + self.offset).abs()
    }
}

fn plane_from_three<T: Real>(a: &Vector3<T>, b: &Vector3<T>, c: &Vector3<T>) -> Option<(Vector3<T>, T)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    let scale = (b - a).norm() * (c - a).norm();
    if !(len > T::c(1e-12) * scale) {
        return None;
    }
    let n = n / len;
    Some((n, -n.dot(a)))
}

/// Total-least-squares plane through `points`.
fn refit<T: Real>(points: &[Vector3<T>], idx: &[usize]) -> (Vector3<T>, T) {
    let n = T::from_count(idx.len());
    let centroid = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + points[i]) / n;
    let mut scatter = Matrix3::zeros();
    for &i in idx {
        let d = points[i] - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (mut k, mut best) = (0, eig.eigenvalues[0]);
    for j in 1..3 {
        if eig.eigenvalues[j] < best {
            best = eig.eigenvalues[j];
            k = j;
        }
    }
    let normal = eig.eigenvectors.column(k).into_owned().normalize();
    (normal, -normal.dot(&centroid))
}

fn inliers_of<T: Real>(points: &[Vector3<T>], normal: &Vector3<T>, offset: T, tol: T) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| (normal.dot(&points[i]) + offset).abs() <= tol)
        .collect()
}

/// Rounds of refit and inlier re-selection after the sampling stage.
const REFINE_ROUNDS: usize = 10;

/// RANSAC over minimal three-point samples followed by a least-squares refit
/// on the consensus set. Hypotheses are ranked by truncated squared distance
/// rather than by inlier count, so with a loose tolerance a tilted plane that
/// merely grazes extra outliers does not beat the plane the inliers lie on.
/// The refit and inlier selection then alternate until the set is stable.
/// The normal is oriented so the origin lies on its positive side. Returns
/// `None` when every sample was degenerate.
pub fn fit_plane_ransac<T: Real>(
    points: &[Vector3<T>],
    inlier_tol: T,
    max_iters: usize,
    seed: u64,
) -> Option<PlaneFit<T>> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let cap = inlier_tol * inlier_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(T, Vector3<T>, T)> = None;
    for _ in 0..max_iters {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.gen_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some((normal, offset)) = plane_from_three(&points[i], &points[j], &points[k]) else {
            continue;
        };
        let cost = points
            .iter()
            .map(|p| {
                let d = normal.dot(p) + offset;
                (d * d).min(cap)
            })
            .fold(T::zero(), |a, b| a + b);
        if best.as_ref().map_or(true, |(c, _, _)| cost < *c) {
            best = Some((cost, normal, offset));
        }
    }
    let (_, normal, offset) = best?;
    let mut inliers = inliers_of(points, &normal, offset, inlier_tol);
    let (mut normal, mut offset) = (normal, offset);
    for _ in 0..REFINE_ROUNDS {
        if inliers.len() < 3 {
            break;
        }
        (normal, offset) = refit(points, &inliers);
        let next = inliers_of(points, &normal, offset, inlier_tol);
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
    }
    if offset < T::zero() {
        normal = -normal;
        offset = -offset;
    }
    let sq: T = inliers
        .iter()
        .map(|&i| {
            let d = normal.dot(&points[i]) + offset;
            d * d
        })
        .fold(T::zero(), |a, b| a + b);
    let residual_rms = (sq / T::from_count(inliers.len())).sqrt();
    Some(PlaneFit {
        normal,
        offset,
        inliers,
        residual_rms,
    })
}

/// Rotation `R_z(a) * R_x(b)` taking the USV up direction `(0, -1, 0)` onto
/// the measured ground normal; rotation about Y is fixed to zero.
pub fn rotation_from_ground_normal<T: Real>(normal: &Vector3<T>) -> RotationMatrix<T> {
    let n = normal.normalize();
    let b = (-n.z).clamp(-T::one(), T::one()).asin();
    let a = n.x.atan2(-n.y);
    RotationMatrix::about_z(a) * RotationMatrix::about_x(b)
}

/// Camera-IMU calibration with the vehicle resting on flat ground.
///
/// `R_cam_usv` comes from the RANSAC ground plane of `cloud` (points within
/// `dist_threshold`), `R_usv_imu` directly from the static IMU reading.
pub fn calibrate_camera_imu<T: Real>(
    cloud: &PointCloud<T>,
    imu_static: &ImuReading<T>,
    cfg: &CalibrationConfig<T>,
) -> Result<CalibrationResult<T>> {
    imu_static.validate()?;
    let candidates: Vec<Vector3<T>> = cloud
        .points
        .iter()
        .filter(|p| p.norm() <= cfg.dist_threshold)
        .copied()
        .collect();
    if candidates.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points within {} m, need at least 3",
            candidates.len(),
            cfg.dist_threshold.as_f64()
        )));
    }
    let fit = fit_plane_ransac(&candidates, cfg.inlier_tol, cfg.max_iters, cfg.seed)
        .ok_or_else(|| Error::CalibrationFailed("all RANSAC samples were degenerate".into()))?;
    let ratio = T::from_count(fit.inliers.len()) / T::from_count(candidates.len());
    if ratio < cfg.min_inlier_ratio || fit.inliers.len() < 3 {
        return Err(Error::CalibrationFailed(format!(
            "inlier ratio {:.3} below floor {:.3}",
            ratio.as_f64(),
            cfg.min_inlier_ratio.as_f64()
        )));
    }
    Ok(CalibrationResult {
        r_cam_usv: rotation_from_ground_normal(&fit.normal),
        r_usv_imu: imu_static.rotation(),
        inlier_count: fit.inliers.len(),
        residual_rms: fit.residual_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Uniform};

    fn plane_z1(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-4.0, 4.0);
        (0..n)
            .map(|_| Vector3::new(u.sample(&mut rng), u.sample(&mut rng), 1.0))
            .collect()
    }

    #[test]
    fn exact_plane_recovered() {
        let pts = plane_z1(200, 1);
        let fit = fit_plane_ransac(&pts, 1.0, 1000, 7).unwrap();
        assert_abs_diff_eq!(fit.normal.z.abs(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.residual_rms, 0.0, epsilon = 1e-9);
        assert_eq!(fit.inliers.len(), 200);
        // origin on the positive side
        assert!(fit.offset > 0.0);
    }

    #[test]
    fn ground_normal_rotation_maps_up_vector() {
        let truth = RotationMatrix::about_z(0.17) * RotationMatrix::about_x(-0.05);
        let up = truth.apply(&Vector3::new(0.0, -1.0, 0.0));
        let r = rotation_from_ground_normal(&up);
        assert!(r.angle_to(&truth) < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let cloud = PointCloud::new(vec![Vector3::new(0.0, 1.0, 2.0), Vector3::new(50.0, 1.0, 2.0)]).unwrap();
        let err = calibrate_camera_imu(&cloud, &ImuReading::level(0.0), &CalibrationConfig::default());
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn low_inlier_ratio_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(-5.0, 5.0);
        let pts: Vec<_> = (0..300)
            .map(|_| Vector3::new(u.sample(&mut rng), u.sample(&mut rng), u.sample(&mut rng)))
            .collect();
        let cfg = CalibrationConfig {
            inlier_tol: 0.01,
            min_inlier_ratio: 0.5,
            ..CalibrationConfig::default()
        };
        let err = calibrate_camera_imu(&PointCloud::new(pts).unwrap(), &ImuReading::level(0.0), &cfg);
        assert!(matches!(err, Err(Error::CalibrationFailed(_))));
    }

    #[test]
    fn same_seed_same_result() {
        let mut pts = plane_z1(100, 2);
        pts.extend(plane_z1(40, 9).into_iter().map(|p| p + Vector3::new(0.0, 0.0, 3.0)));
        let a = fit_plane_ransac(&pts, 0.5, 200, 11).unwrap();
        let b = fit_plane_ransac(&pts, 0.5, 200, 11).unwrap();
        assert_eq!(a, b);
    }
}
