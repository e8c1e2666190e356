use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A proper rotation (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix<T: Real>(Matrix3<T>);

impl<T: Real> RotationMatrix<T> {
    /// Wraps `m` after checking `m^T m = I` and `det m = 1`.
    pub fn new(m: Matrix3<T>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("rotation has non-finite entries".into()));
        }
        let tol = T::orthonormal_tol();
        let gram = m.transpose() * m - Matrix3::identity();
        if gram.amax() > tol {
            return Err(Error::InvalidInput(format!(
                "matrix is not orthonormal (max |R^T R - I| = {:e})",
                gram.amax().as_f64()
            )));
        }
        if (m.determinant() - T::one()).abs() > tol {
            return Err(Error::InvalidInput("rotation determinant is not +1".into()));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Right-handed rotation by `angle` about the X axis.
    pub fn about_x(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (z, o) = (T::zero(), T::one());
        Self(Matrix3::new(o, z, z, z, c, -s, z, s, c))
    }

    pub fn about_y(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (z, o) = (T::zero(), T::one());
        Self(Matrix3::new(c, z, s, z, o, z, -s, z, c))
    }

    pub fn about_z(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (z, o) = (T::zero(), T::one());
        Self(Matrix3::new(c, -s, z, s, c, z, z, z, o))
    }

    pub fn from_row_major(values: [T; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(&values))
    }

    pub fn to_row_major(&self) -> [T; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        self.0 * v
    }

    /// Angle of the relative rotation `self^T other`, in radians.
    pub fn angle_to(&self, other: &Self) -> T {
        let rel = self.0.transpose() * other.0;
        let cos = ((rel.trace() - T::one()) / T::c(2.0)).clamp(-T::one(), T::one());
        cos.acos()
    }

    pub fn cast<U: Real>(&self) -> RotationMatrix<U> {
        RotationMatrix(self.0.map(|v| U::c(v.as_f64())))
    }
}

impl<T: Real> Mul for RotationMatrix<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}
