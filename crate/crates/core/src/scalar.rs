//! Scalar abstraction shared by the geometric and statistical code.
//!
//! Everything numeric in this crate is written against [`Real`], which is
//! satisfied by `f32` and `f64`. Pixel rasters stay integer (`u8`); only the
//! quantities derived from them are generic.

use std::fmt::Debug;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the crate.
///
/// Combines nalgebra's `RealField` (linear algebra, transcendental functions)
/// with num-traits conversions so constants can be written as `T::c(0.5)`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Converts a count or index into `Self`.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy conversion to `f64`, used for serialization and reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative tolerance suitable for orthonormality checks in this precision.
    ///
    /// `1e-9` for `f64`; for `f32` the machine epsilon dominates.
    #[inline]
    fn orthonormal_tol() -> Self {
        let eps = Self::default_epsilon() * Self::c(100.0);
        let base = Self::c(1e-9);
        if eps > base {
            eps
        } else {
            base
        }
    }
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static
{
}
