use image::RgbImage;
use nalgebra::Vector5;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-pixel features `[u, v, r, g, b]`, all normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage<T: Real> {
    pub width: usize,
    pub height: usize,
    pub features: Vec<Vector5<T>>,
}

impl<T: Real> FeatureImage<T> {
    pub fn new(width: usize, height: usize, features: Vec<Vector5<T>>) -> Result<Self> {
        if width == 0 || height == 0 || features.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} features for a {width}x{height} grid",
                features.len()
            )));
        }
        let inside = |v: &T| v.is_finite() && *v >= T::zero() && *v <= T::one();
        if let Some(i) = features.iter().position(|f| !f.iter().all(inside)) {
            return Err(Error::InvalidInput(format!("feature {i} outside the unit cube")));
        }
        Ok(Self {
            width,
            height,
            features,
        })
    }

    /// Downsamples `img` to a `grid_w x grid_h` grid by averaging the color of
    /// each block. Positions are block centers over the grid.
    pub fn from_rgb(img: &RgbImage, grid_w: usize, grid_h: usize) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if grid_w == 0 || grid_h == 0 || grid_w > w || grid_h > h {
            return Err(Error::InvalidInput(format!(
                "working grid {grid_w}x{grid_h} does not fit a {w}x{h} image"
            )));
        }
        let col_edges: Vec<usize> = (0..=grid_w).map(|c| c * w / grid_w).collect();
        let row_edges: Vec<usize> = (0..=grid_h).map(|r| r * h / grid_h).collect();
        let raw = img.as_raw();
        let mut sums = vec![[0u64; 3]; grid_w * grid_h];
        for (gr, rows) in row_edges.windows(2).enumerate() {
            for y in rows[0]..rows[1] {
                let line = &raw[y * w * 3..(y + 1) * w * 3];
                for (gc, cols) in col_edges.windows(2).enumerate() {
                    let acc = &mut sums[gr * grid_w + gc];
                    for px in line[cols[0] * 3..cols[1] * 3].chunks_exact(3) {
                        acc[0] += px[0] as u64;
                        acc[1] += px[1] as u64;
                        acc[2] += px[2] as u64;
                    }
                }
            }
        }
        let mut features = Vec::with_capacity(grid_w * grid_h);
        for gr in 0..grid_h {
            for gc in 0..grid_w {
                let n = ((row_edges[gr + 1] - row_edges[gr]) * (col_edges[gc + 1] - col_edges[gc])) as f64;
                let s = sums[gr * grid_w + gc];
                let color = |v: u64| T::c(v as f64 / (n * 255.0));
                features.push(Vector5::new(
                    T::c((gc as f64 + 0.5) / grid_w as f64),
                    T::c((gr as f64 + 0.5) / grid_h as f64),
                    color(s[0]),
                    color(s[1]),
                    color(s[2]),
                ));
            }
        }
        Ok(Self {
            width: grid_w,
            height: grid_h,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}
