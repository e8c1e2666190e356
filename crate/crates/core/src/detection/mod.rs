//! Water mask, obstacle blobs, box suppression and the water edge.

mod components;

use serde::{Deserialize, Serialize};

pub use components::label_components;
use components::label_runs;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::segmentation::NUM_LABELS;

/// Which camera of the stereo rig an observation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Camera {
    Left,
    Right,
}

impl Camera {
    pub fn opposite(self) -> Self {
        match self {
            Camera::Left => Camera::Right,
            Camera::Right => Camera::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Camera::Left => "left",
            Camera::Right => "right",
        }
    }
}

/// Axis-aligned box `[u, v, w, h]`: top-left corner and size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub u: u32,
    pub v: u32,
    pub w: u32,
    pub h: u32,
}

impl From<[u32; 4]> for BoundingBox {
    fn from(b: [u32; 4]) -> Self {
        Self::new(b[0], b[1], b[2], b[3])
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.u, b.v, b.w, b.h]
    }
}

impl BoundingBox {
    pub const fn new(u: u32, v: u32, w: u32, h: u32) -> Self {
        Self { u, v, w, h }
    }

    /// Exclusive right column.
    pub fn right(&self) -> u32 {
        self.u + self.w
    }

    /// Exclusive bottom row.
    pub fn bottom(&self) -> u32 {
        self.v + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (self.u as f64 + self.w as f64 / 2.0, self.v as f64 + self.h as f64 / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.w as f64).hypot(self.h as f64)
    }

    pub fn union(&self, o: &Self) -> Self {
        let (u, v) = (self.u.min(o.u), self.v.min(o.v));
        Self::new(u, v, self.right().max(o.right()) - u, self.bottom().max(o.bottom()) - v)
    }

    pub fn intersection_area(&self, o: &Self) -> u64 {
        let w = self.right().min(o.right()).saturating_sub(self.u.max(o.u));
        let h = self.bottom().min(o.bottom()).saturating_sub(self.v.max(o.v));
        w as u64 * h as u64
    }

    pub fn iou(&self, o: &Self) -> f64 {
        let inter = self.intersection_area(o);
        let union = self.area() + o.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Euclidean edge-to-edge distance; zero when the boxes touch or overlap.
    pub fn gap(&self, o: &Self) -> f64 {
        let gx = self.u.max(o.u).saturating_sub(self.right().min(o.right()));
        let gy = self.v.max(o.v).saturating_sub(self.bottom().min(o.bottom()));
        (gx as f64).hypot(gy as f64)
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }
}

/// Binary water raster, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaterMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl WaterMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} mask values for {width}x{height}", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn is_water(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    /// Nearest-neighbor resampling with pixel-center alignment.
    pub fn upsample(&self, width: usize, height: usize) -> WaterMask {
        let src_col: Vec<usize> = (0..width).map(|x| (2 * x + 1) * self.width / (2 * width)).collect();
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (2 * y + 1) * self.height / (2 * height);
            let row = &self.data[sy * self.width..(sy + 1) * self.width];
            data.extend(src_col.iter().map(|&sx| row[sx]));
        }
        WaterMask { width, height, data }
    }
}

/// Water wins only when it is strictly the most probable label; ties go to
/// non-water.
pub fn water_mask<T: Real>(posteriors: &[[T; NUM_LABELS]], width: usize, height: usize) -> Result<WaterMask> {
    if posteriors.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} posterior rows for {width}x{height}",
            posteriors.len()
        )));
    }
    let data = posteriors
        .iter()
        .map(|r| u8::from(r[2] > r[0] && r[2] > r[1] && r[2] > r[3]))
        .collect();
    Ok(WaterMask { width, height, data })
}

/// A connected group of non-water pixels enclosed by the main water region.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub bbox: BoundingBox,
    pub area: usize,
    pub centroid: (f64, f64),
    /// Fraction of the blob's outer boundary lying in the main water region.
    pub water_boundary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMap {
    pub width: usize,
    pub height: usize,
    /// Largest 8-connected water region.
    pub region: Vec<bool>,
    pub region_size: usize,
    pub blobs: Vec<Blob>,
}

/// Minimum share of a blob's boundary that must be main-region water.
pub const ENCLOSURE_RATIO: f64 = 0.6;

/// Keeps the largest water component and lists the non-water components it
/// encloses: at least [`ENCLOSURE_RATIO`] of their boundary is in the region
/// and their centroid lies below the water edge.
pub fn extract_obstacle_map(mask: &WaterMask) -> ObstacleMap {
    let (w, h) = (mask.width, mask.height);
    let data = &mask.data;
    let water = label_runs(w, h, |i| data[i] == 1);
    let mut sizes = vec![0usize; water.count + 1];
    for r in &water.runs {
        sizes[r.label as usize] += r.len();
    }
    let mut best = 0u32;
    for l in 1..=water.count {
        if best == 0 || sizes[l] > sizes[best as usize] {
            best = l as u32;
        }
    }
    let mut region = vec![false; w * h];
    for y in 0..h {
        for r in water.row(y).iter().filter(|r| r.label == best) {
            region[y * w + r.start as usize..y * w + r.end as usize].fill(true);
        }
    }
    let region_size = if best == 0 { 0 } else { sizes[best as usize] };
    let mut map = ObstacleMap {
        width: w,
        height: h,
        region,
        region_size,
        blobs: Vec::new(),
    };
    if region_size == 0 {
        return map;
    }
    let edge = water_edge(&map);

    let dry = label_runs(w, h, |i| data[i] == 0);
    struct Acc {
        n: usize,
        sx: f64,
        sy: f64,
        min: (u32, u32),
        max: (u32, u32),
        boundary: usize,
        in_region: usize,
    }
    let mut acc: Vec<Acc> = (0..=dry.count)
        .map(|_| Acc {
            n: 0,
            sx: 0.0,
            sy: 0.0,
            min: (u32::MAX, u32::MAX),
            max: (0, 0),
            boundary: 0,
            in_region: 0,
        })
        .collect();
    let mut spans: Vec<(u32, u32, u32)> = Vec::new();
    for y in 0..h {
        for r in dry.row(y) {
            let a = &mut acc[r.label as usize];
            let n = r.len();
            a.n += n;
            a.sx += (r.start + r.end - 1) as f64 * n as f64 / 2.0;
            a.sy += (y * n) as f64;
            a.min = (a.min.0.min(r.start), a.min.1.min(y as u32));
            a.max = (a.max.0.max(r.end - 1), a.max.1.max(y as u32));
        }
        // Water pixels of this row 8-adjacent to each blob, one credit per blob.
        spans.clear();
        for yy in y.saturating_sub(1)..(y + 2).min(h) {
            spans.extend(dry.row(yy).iter().map(|r| (r.label, r.start.saturating_sub(1), (r.end + 1).min(w as u32))));
        }
        spans.sort_unstable();
        let wet = water.row(y);
        let mut i = 0;
        while i < spans.len() {
            let (label, s, mut e) = spans[i];
            i += 1;
            while i < spans.len() && spans[i].0 == label && spans[i].1 <= e {
                e = e.max(spans[i].2);
                i += 1;
            }
            let first = wet.partition_point(|r| r.end <= s);
            for r in wet[first..].iter().take_while(|r| r.start < e) {
                let overlap = (r.end.min(e) - r.start.max(s)) as usize;
                let a = &mut acc[label as usize];
                a.boundary += overlap;
                if r.label == best {
                    a.in_region += overlap;
                }
            }
        }
    }
    for a in acc.iter().skip(1) {
        if a.boundary == 0 {
            continue;
        }
        let ratio = a.in_region as f64 / a.boundary as f64;
        let centroid = (a.sx / a.n as f64, a.sy / a.n as f64);
        let col = (centroid.0.round() as usize).min(w - 1);
        let below = edge.rows[col].is_some_and(|r| centroid.1 > r as f64);
        if ratio >= ENCLOSURE_RATIO && below {
            map.blobs.push(Blob {
                bbox: BoundingBox::new(a.min.0, a.min.1, a.max.0 - a.min.0 + 1, a.max.1 - a.min.1 + 1),
                area: a.n,
                centroid,
                water_boundary: ratio,
            });
        }
    }
    map
}

/// Tentative obstacle: a (possibly merged) blob box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Non-water pixels supporting the box.
    pub area: usize,
    pub camera: Camera,
}

fn by_area_desc(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.area
        .cmp(&a.area)
        .then_with(|| (a.bbox.v, a.bbox.u, a.bbox.w, a.bbox.h).cmp(&(b.bbox.v, b.bbox.u, b.bbox.w, b.bbox.h)))
}

/// Drops detections below `min_area`, then repeatedly merges any two whose
/// boxes are within `merge_dist` until no such pair remains. Output sorted by
/// area descending.
pub fn suppress_detections(dets: &[Detection], min_area: usize, merge_dist: f64) -> Vec<Detection> {
    let mut out: Vec<Detection> = dets.iter().filter(|d| d.area >= min_area).copied().collect();
    loop {
        let mut merged = false;
        let mut i = 0;
        while i < out.len() {
            let mut j = i + 1;
            while j < out.len() {
                if out[i].bbox.gap(&out[j].bbox) <= merge_dist {
                    let other = out.swap_remove(j);
                    out[i].bbox = out[i].bbox.union(&other.bbox);
                    out[i].area += other.area;
                    merged = true;
                    j = i + 1;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        if !merged {
            break;
        }
    }
    out.sort_by(by_area_desc);
    out
}

pub fn suppress_and_box(map: &ObstacleMap, camera: Camera, min_area: usize, merge_dist: f64) -> Vec<Detection> {
    let dets: Vec<Detection> = map
        .blobs
        .iter()
        .map(|b| Detection {
            bbox: b.bbox,
            area: b.area,
            camera,
        })
        .collect();
    suppress_detections(&dets, min_area, merge_dist)
}

/// Per-column topmost row of the main water region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WaterEdge {
    pub rows: Vec<Option<u32>>,
}

impl WaterEdge {
    pub fn valid_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }
}

pub fn water_edge(map: &ObstacleMap) -> WaterEdge {
    let mut rows = vec![None; map.width];
    let mut remaining = map.width;
    for y in 0..map.height {
        if remaining == 0 {
            break;
        }
        let line = &map.region[y * map.width..(y + 1) * map.width];
        for (x, &r) in line.iter().enumerate() {
            if r && rows[x].is_none() {
                rows[x] = Some(y as u32);
                remaining -= 1;
            }
        }
    }
    WaterEdge { rows }
}

/// Detections of one camera for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: usize,
    pub camera: Camera,
    pub boxes: Vec<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<WaterEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<Vec<Option<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ncc_peak: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescued: Option<Vec<bool>>,
}

impl DetectionRecord {
    pub fn new(frame: usize, camera: Camera, dets: &[Detection], edge: Option<WaterEdge>) -> Self {
        Self {
            frame,
            camera,
            boxes: dets.iter().map(|d| d.bbox).collect(),
            edge,
            pair_id: None,
            ncc_peak: None,
            rescued: None,
        }
    }
}
