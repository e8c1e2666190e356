use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::BoundingBox;
use crate::error::{Error, Result};
use crate::geometry::HorizonLine;

/// Image line `row = intercept + slope * col`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonAnnotation {
    pub slope: f64,
    pub intercept: f64,
}

impl HorizonAnnotation {
    pub fn from_line(line: &HorizonLine<f64>) -> Option<Self> {
        line.valid.then(|| Self {
            slope: line.slope(),
            intercept: line.row_at(0.0),
        })
    }

    pub fn row_at(&self, col: f64) -> f64 {
        self.intercept + self.slope * col
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleAnnotation {
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    /// Horizontal shift between the left and right views, pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disparity: Option<f64>,
}

impl From<BoundingBox> for ObstacleAnnotation {
    fn from(bbox: BoundingBox) -> Self {
        Self {
            bbox,
            id: None,
            disparity: None,
        }
    }
}

/// Ground truth for one frame of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame: usize,
    /// Water-edge polyline as `[col, row]` vertices.
    pub edge: Vec<[f64; 2]>,
    #[serde(default)]
    pub large_obstacles: Vec<ObstacleAnnotation>,
    #[serde(default)]
    pub small_obstacles: Vec<ObstacleAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonAnnotation>,
    /// Centroids of injected specular clusters, `[col, row]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub glitter: Vec<[f64; 2]>,
}

impl Annotation {
    pub fn obstacles(&self) -> impl Iterator<Item = &ObstacleAnnotation> {
        self.large_obstacles.iter().chain(&self.small_obstacles)
    }

    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.obstacles().map(|o| o.bbox).collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}
