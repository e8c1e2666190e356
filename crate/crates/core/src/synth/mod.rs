//! Synthetic stereo sequences with ground truth: flat-shaded sky, shore and
//! water bands under a known attitude, billboard obstacles on the water, and
//! optional specular glitter and mirrored reflections.

mod render;
mod write;

use serde::{Deserialize, Serialize};

pub use render::{ground_cloud, inject_artifacts, render_frame, render_sequence, true_horizon, StereoFrame};
pub use write::{frame_name, write_dataset, DatasetLayout, DatasetSummary};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub color: [u8; 3],
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    Ellipse,
}

/// Upright billboard facing the camera. Coordinates are in the level world
/// frame: origin at the left camera, X right, Y down, Z forward; the water
/// surface is the plane `Y = camera_height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub center: [f64; 3],
    /// Width and height in meters.
    pub size: [f64; 2],
    pub color: [u8; 3],
    #[serde(default = "default_shape")]
    pub shape: Shape,
    /// Displacement per frame along X and Z, meters.
    #[serde(default)]
    pub velocity: [f64; 2],
}

fn default_shape() -> Shape {
    Shape::Rectangle
}

impl ObstacleSpec {
    /// Billboard of `size` floating on the water at lateral offset `x` and
    /// depth `z`.
    pub fn floating(x: f64, z: f64, size: [f64; 2], color: [u8; 3], camera_height: f64) -> Self {
        Self {
            center: [x, camera_height - size[1] / 2.0, z],
            size,
            color,
            shape: Shape::Rectangle,
            velocity: [0.0, 0.0],
        }
    }

    pub fn at_frame(&self, index: usize) -> [f64; 3] {
        let t = index as f64;
        [self.center[0] + self.velocity[0] * t, self.center[1], self.center[2] + self.velocity[1] * t]
    }
}

/// Roll and pitch in radians: a linear ramp plus a sinusoidal sway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttitudeTrace {
    pub roll: [f64; 2],
    pub pitch: [f64; 2],
    pub sway_amplitude: [f64; 2],
    /// Sway period in frames.
    pub sway_period: f64,
}

impl Default for AttitudeTrace {
    fn default() -> Self {
        Self {
            roll: [0.0, 0.0],
            pitch: [0.0, 0.0],
            sway_amplitude: [0.0, 0.0],
            sway_period: 40.0,
        }
    }
}

impl AttitudeTrace {
    /// `(roll, pitch)` at frame `index` of `frames`.
    pub fn at(&self, index: usize, frames: usize) -> (f64, f64) {
        let s = if frames > 1 { index as f64 / (frames - 1) as f64 } else { 0.0 };
        let phase = (std::f64::consts::TAU * index as f64 / self.sway_period).sin();
        (
            self.roll[0] + (self.roll[1] - self.roll[0]) * s + self.sway_amplitude[0] * phase,
            self.pitch[0] + (self.pitch[1] - self.pitch[0]) * s + self.sway_amplitude[1] * phase,
        )
    }
}

/// Clusters of small bright dots on the water, laid out independently per
/// view. Cluster anchors ride at a fixed depth below the horizon for
/// `lifetime` frames (0: the whole sequence); the dots are redrawn every frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlitterSpec {
    /// Clusters per view and frame.
    pub count: usize,
    pub dots: usize,
    /// Cluster radius, pixels.
    pub radius: f64,
    pub dot_radius: f64,
    pub color: [u8; 3],
    /// Minimum distance between cluster centers and from obstacle boxes.
    pub clearance: f64,
    pub lifetime: usize,
}

impl Default for GlitterSpec {
    fn default() -> Self {
        Self {
            count: 0,
            dots: 120,
            radius: 16.0,
            dot_radius: 3.5,
            color: [250, 250, 245],
            clearance: 80.0,
            lifetime: 0,
        }
    }
}

/// Striped patch painted identically into both views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSpec {
    /// `[u, v, w, h]` in pixels.
    pub rect: [u32; 4],
    pub stripe_width: u32,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub frames: usize,
    pub fps: f64,
    /// Meters above the water.
    pub camera_height: f64,
    /// Meters; the right camera sits at `+baseline` along the camera X axis.
    pub baseline: f64,
    pub sky: BandSpec,
    pub middle: BandSpec,
    pub water: BandSpec,
    /// Height of the shore band just above the horizon, pixels.
    pub middle_height: f64,
    pub attitude: AttitudeTrace,
    pub obstacles: Vec<ObstacleSpec>,
    pub obstacle_noise_sigma: f64,
    /// Checker cell on obstacle faces, meters.
    pub obstacle_texture: f64,
    pub glitter: GlitterSpec,
    pub reflection: Option<ReflectionSpec>,
    /// Boxes below this many pixels are annotated as small obstacles.
    pub small_area: u64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 1278,
            height: 958,
            focal: 700.0,
            frames: 50,
            fps: 10.0,
            camera_height: 3.0,
            baseline: 0.3,
            sky: BandSpec {
                color: [190, 205, 225],
                noise_sigma: 3.0,
            },
            middle: BandSpec {
                color: [70, 90, 60],
                noise_sigma: 6.0,
            },
            water: BandSpec {
                color: [30, 70, 110],
                noise_sigma: 4.0,
            },
            middle_height: 80.0,
            attitude: AttitudeTrace::default(),
            obstacles: vec![
                ObstacleSpec::floating(-3.0, 9.0, [1.6, 1.2], [200, 60, 40], 3.0),
                ObstacleSpec::floating(1.0, 7.0, [1.2, 1.0], [230, 200, 40], 3.0),
                ObstacleSpec::floating(4.5, 10.0, [2.0, 1.2], [225, 225, 225], 3.0),
            ],
            obstacle_noise_sigma: 4.0,
            obstacle_texture: 0.3,
            glitter: GlitterSpec::default(),
            reflection: None,
            small_area: 400,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("image size {}x{} too small", self.width, self.height));
        }
        if !(self.focal > 0.0) {
            return bad(format!("focal length {} must be positive", self.focal));
        }
        if !(self.baseline > 0.0) {
            return bad(format!("baseline {} must be positive", self.baseline));
        }
        if !(self.camera_height > 0.0) {
            return bad(format!("camera height {} must be positive", self.camera_height));
        }
        if !(self.fps > 0.0) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if !(self.middle_height >= 0.0) {
            return bad("middle band height must be non-negative".into());
        }
        for sigma in [self.sky.noise_sigma, self.middle.noise_sigma, self.water.noise_sigma, self.obstacle_noise_sigma] {
            if !(sigma >= 0.0) {
                return bad("noise sigma must be non-negative".into());
            }
        }
        if !(self.obstacle_texture > 0.0) {
            return bad("obstacle texture cell must be positive".into());
        }
        for o in &self.obstacles {
            if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return bad(format!("obstacle size {:?} must be positive", o.size));
            }
        }
        if self.glitter.count > 0 && !(self.glitter.radius > 0.0 && self.glitter.dot_radius > 0.0) {
            return bad("glitter radii must be positive".into());
        }
        Ok(())
    }
}
