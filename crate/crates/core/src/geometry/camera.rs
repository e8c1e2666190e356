use nalgebra::{Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fixed-point iterations used when inverting the radial model.
pub const UNDISTORT_MAX_ITERS: usize = 20;
/// Convergence threshold of the undistortion iteration, in pixels.
pub const UNDISTORT_TOL_PX: f64 = 1e-10;

/// Pinhole intrinsics with a two-coefficient polynomial radial distortion.
///
/// Distortion acts on normalized coordinates `(x, y)` as
/// `(x, y) * (1 + k1 r^2 + k2 r^4)`, with no tangential terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub k1: T,
    pub k2: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(fx: T, fy: T, cx: T, cy: T, k1: T, k2: T, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            k1,
            k2,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Distortion-free camera with the principal point at the image center.
    pub fn pinhole(focal: T, width: u32, height: u32) -> Result<Self> {
        let cx = (T::from_count(width as usize) - T::one()) / T::c(2.0);
        let cy = (T::from_count(height as usize) - T::one()) / T::c(2.0);
        Self::new(focal, focal, cx, cy, T::zero(), T::zero(), width, height)
    }

    pub fn with_distortion(mut self, k1: T, k2: T) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image width and height must be positive".into()));
        }
        let finite = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("intrinsics must be finite".into()));
        }
        if self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if !self.contains(self.cx, self.cy) {
            return Err(Error::InvalidInput("principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn k_matrix(&self) -> Matrix3<T> {
        let (z, o) = (T::zero(), T::one());
        Matrix3::new(self.fx, z, self.cx, z, self.fy, self.cy, z, z, o)
    }

    /// True when `(u, v)` lies within the pixel-center extent `[0, w-1] x [0, h-1]`.
    pub fn contains(&self, u: T, v: T) -> bool {
        let w = T::from_count(self.width as usize) - T::one();
        let h = T::from_count(self.height as usize) - T::one();
        u >= T::zero() && v >= T::zero() && u <= w && v <= h
    }

    #[inline]
    fn radial_factor(&self, r2: T) -> T {
        T::one() + self.k1 * r2 + self.k2 * r2 * r2
    }

    pub fn distort_normalized(&self, p: Vector2<T>) -> Vector2<T> {
        p * self.radial_factor(p.norm_squared())
    }

    /// Inverts [`Self::distort_normalized`] by fixed-point iteration.
    pub fn undistort_normalized(&self, pd: Vector2<T>) -> Vector2<T> {
        let tol = T::c(UNDISTORT_TOL_PX) / self.fx.max(self.fy);
        let mut p = pd;
        for _ in 0..UNDISTORT_MAX_ITERS {
            let next = pd / self.radial_factor(p.norm_squared());
            let step = (next - p).amax();
            p = next;
            if step < tol {
                break;
            }
        }
        p
    }

    pub fn normalized_to_pixel(&self, p: Vector2<T>) -> Vector2<T> {
        Vector2::new(self.fx * p.x + self.cx, self.fy * p.y + self.cy)
    }

    pub fn pixel_to_normalized(&self, px: Vector2<T>) -> Vector2<T> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    /// Maps an ideal (distortion-free) pixel to where the lens actually images it.
    pub fn distort_pixel(&self, px: Vector2<T>) -> Vector2<T> {
        self.normalized_to_pixel(self.distort_normalized(self.pixel_to_normalized(px)))
    }

    pub fn undistort_pixel(&self, px: Vector2<T>) -> Vector2<T> {
        self.normalized_to_pixel(self.undistort_normalized(self.pixel_to_normalized(px)))
    }

    /// Converts every field to another scalar type.
    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        let c = |v: T| U::c(v.as_f64());
        CameraIntrinsics {
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            k1: c(self.k1),
            k2: c(self.k2),
            width: self.width,
            height: self.height,
        }
    }
}
