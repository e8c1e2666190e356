//! IMU-assisted water segmentation and stereo-verified obstacle detection
//! for unmanned surface vehicles.
//!
//! The numerical core is generic over the scalar type; the aliases below fix
//! it to `f64` (and `f32` where memory matters more than precision).

pub mod detection;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod pipeline;
pub mod scalar;
pub mod segmentation;
pub mod stereo;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type HorizonLine = geometry::HorizonLine<f64>;
pub type CameraIntrinsics = geometry::CameraIntrinsics<f64>;
pub type CalibrationResult = geometry::CalibrationResult<f64>;
pub type ImuReading = geometry::ImuReading<f64>;
pub type RotationMatrix = geometry::RotationMatrix<f64>;
pub type FeatureImage = segmentation::FeatureImage<f64>;
pub type MixtureModel = segmentation::MixtureModel<f64>;
pub type HyperPriorSet = segmentation::HyperPriorSet<f64>;

pub type MixtureModelF32 = segmentation::MixtureModel<f32>;
pub type FeatureImageF32 = segmentation::FeatureImage<f32>;
