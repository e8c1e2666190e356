use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::detection::{Camera, Detection};
use crate::error::{Error, Result};

/// Fundamental matrix mapping left pixels to right epipolar lines
/// (`x_r^T F x_l = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoGeometry {
    pub f: Matrix3<f64>,
    pub left_size: (u32, u32),
    pub right_size: (u32, u32),
}

/// Smallest singular value below this fraction of the largest counts as zero.
pub const RANK_TOL: f64 = 1e-6;

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

impl StereoGeometry {
    pub fn new(f: Matrix3<f64>, left_size: (u32, u32), right_size: (u32, u32)) -> Self {
        Self {
            f,
            left_size,
            right_size,
        }
    }

    /// `F = K_r^-T [t]x R K_l^-1` for the rig transform `X_r = R X_l + t`.
    pub fn from_extrinsics(
        k_left: &Matrix3<f64>,
        k_right: &Matrix3<f64>,
        r: &Matrix3<f64>,
        t: &Vector3<f64>,
        left_size: (u32, u32),
        right_size: (u32, u32),
    ) -> Result<Self> {
        let kl_inv = k_left
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("left camera matrix is singular".into()))?;
        let kr_inv = k_right
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("right camera matrix is singular".into()))?;
        let f = kr_inv.transpose() * skew(t) * r * kl_inv;
        let scale = f.abs().max();
        let f = if scale > 0.0 { f / scale } else { f };
        Ok(Self::new(f, left_size, right_size))
    }

    /// The same rig seen with the cameras' roles exchanged.
    pub fn transposed(&self) -> Self {
        Self::new(self.f.transpose(), self.right_size, self.left_size)
    }

    /// False unless F has rank exactly two.
    pub fn is_valid(&self) -> bool {
        let sv = self.f.singular_values();
        let (mut hi, mut lo) = (sv[0], sv[0]);
        for &s in sv.iter() {
            hi = hi.max(s);
            lo = lo.min(s);
        }
        let mid = sv.iter().sum::<f64>() - hi - lo;
        hi > 0.0 && lo < RANK_TOL * hi && mid >= RANK_TOL * hi && self.f.iter().all(|v| v.is_finite())
    }

    /// Epipolar line in the opposite image of a pixel seen by `camera`.
    pub fn epipolar_line(&self, camera: Camera, x: f64, y: f64) -> Vector3<f64> {
        let p = Vector3::new(x, y, 1.0);
        match camera {
            Camera::Left => self.f * p,
            Camera::Right => self.f.transpose() * p,
        }
    }
}

/// Candidates from the opposite camera plus whether the geometry was
/// unusable (in which case every candidate is returned).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidates {
    pub indices: Vec<usize>,
    pub degenerate: bool,
}

/// Perpendicular distance from a point to a homogeneous line; `None` when
/// the line is undefined.
pub fn point_line_distance(line: &Vector3<f64>, x: f64, y: f64) -> Option<f64> {
    let norm = line.x.hypot(line.y);
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    Some((line.x * x + line.y * y + line.z).abs() / norm)
}

/// Detections of the opposite camera whose center lies within `det`'s box
/// diagonal of the epipolar line through `det`'s center.
pub fn epipolar_candidates(det: &Detection, geom: &StereoGeometry, others: &[Detection]) -> Candidates {
    let all = || Candidates {
        indices: (0..others.len()).collect(),
        degenerate: true,
    };
    if !geom.is_valid() {
        return all();
    }
    let (cx, cy) = det.bbox.center();
    let line = geom.epipolar_line(det.camera, cx, cy);
    let radius = det.bbox.diagonal();
    let mut indices = Vec::new();
    for (i, o) in others.iter().enumerate() {
        let (ox, oy) = o.bbox.center();
        match point_line_distance(&line, ox, oy) {
            Some(d) if d <= radius => indices.push(i),
            Some(_) => {}
            None => return all(),
        }
    }
    Candidates {
        indices,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::BoundingBox;

    fn rectified() -> StereoGeometry {
        let k = Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0);
        StereoGeometry::from_extrinsics(&k, &k, &Matrix3::identity(), &Vector3::new(-0.3, 0.0, 0.0), (640, 480), (640, 480))
            .unwrap()
    }

    fn det(u: u32, v: u32, w: u32, h: u32, camera: Camera) -> Detection {
        Detection {
            bbox: BoundingBox::new(u, v, w, h),
            area: (w * h) as usize,
            camera,
        }
    }

    #[test]
    fn rectified_rig_has_horizontal_lines() {
        let g = rectified();
        assert!(g.is_valid());
        let l = g.epipolar_line(Camera::Left, 100.0, 200.0);
        assert!(l.x.abs() < 1e-12);
        assert!((point_line_distance(&l, 400.0, 200.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn boundary_is_closed() {
        let g = rectified();
        let d = det(100, 100, 30, 40, Camera::Left); // diagonal 50, center row 120
        let others = [det(200, 150, 10, 20, Camera::Right), det(200, 151, 10, 20, Camera::Right)];
        // centers at rows 160 and 161: distances 40 and 41
        let c = epipolar_candidates(&d, &g, &others);
        assert_eq!(c.indices, vec![0, 1]);
        let far = [det(0, 165, 10, 10, Camera::Right), det(0, 166, 10, 10, Camera::Right)];
        // centers 170 and 171: distance exactly 50 and 51
        assert_eq!(epipolar_candidates(&d, &g, &far).indices, vec![0]);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let g = StereoGeometry::new(Matrix3::zeros(), (10, 10), (10, 10));
        let c = epipolar_candidates(&det(0, 0, 2, 2, Camera::Left), &g, &[det(5, 5, 2, 2, Camera::Right)]);
        assert!(c.degenerate);
        assert_eq!(c.indices, vec![0]);
        let full_rank = StereoGeometry::new(Matrix3::identity(), (10, 10), (10, 10));
        assert!(!full_rank.is_valid());
    }
}
