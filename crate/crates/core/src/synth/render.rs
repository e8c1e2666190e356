use image::{Rgb, RgbImage};
use log::warn;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{SceneSpec, Shape};
use crate::detection::{BoundingBox, Camera};
use crate::error::{Error, Result};
use crate::eval::{Annotation, HorizonAnnotation, ObstacleAnnotation};
use crate::geometry::{HorizonLine, ImuReading, PointCloud};

/// One rendered frame pair with its IMU sample and per-camera ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub index: usize,
    pub left: RgbImage,
    pub right: RgbImage,
    pub imu: ImuReading<f64>,
    pub truth: [Annotation; 2],
}

impl StereoFrame {
    pub fn image(&self, camera: Camera) -> &RgbImage {
        match camera {
            Camera::Left => &self.left,
            Camera::Right => &self.right,
        }
    }

    pub fn truth(&self, camera: Camera) -> &Annotation {
        &self.truth[camera as usize]
    }
}

const NOISE_STREAM: u64 = 0;
const GLITTER_STREAM: u64 = 2;
const REFLECTION_STREAM: u64 = 4;
const GLITTER_LAYOUT_STREAM: u64 = 5;

fn stream(seed: u64, index: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 * 8 + purpose);
    rng
}

fn attitude(spec: &SceneSpec, index: usize) -> Result<ImuReading<f64>> {
    let (roll, pitch) = spec.attitude.at(index, spec.frames);
    ImuReading::new(index as f64 / spec.fps, roll, pitch, 0.0)
}

/// Pixel-ray geometry of one camera.
struct View {
    origin: Vector3<f64>,
    /// Camera to level-world rotation.
    to_world: Matrix3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
}

impl View {
    fn new(spec: &SceneSpec, imu: &ImuReading<f64>, camera: Camera) -> Self {
        let m = *imu.rotation().matrix();
        let offset = match camera {
            Camera::Left => 0.0,
            Camera::Right => spec.baseline,
        };
        Self {
            origin: m.transpose() * Vector3::new(offset, 0.0, 0.0),
            to_world: m.transpose(),
            focal: spec.focal,
            cx: (spec.width as f64 - 1.0) / 2.0,
            cy: (spec.height as f64 - 1.0) / 2.0,
        }
    }

    fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.to_world * Vector3::new((u - self.cx) / self.focal, (v - self.cy) / self.focal, 1.0)
    }

    fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.to_world.transpose() * (p - self.origin)
    }
}

/// Coefficients `(a, b, c)` with `a u + b v + c` equal to the vertical world
/// component of the pixel ray; zero on the horizon, positive toward the water.
fn horizon_coefficients(spec: &SceneSpec, imu: &ImuReading<f64>) -> (f64, f64, f64) {
    let m = imu.rotation();
    let up = m.matrix().column(1).into_owned();
    let f = spec.focal;
    let (cx, cy) = ((spec.width as f64 - 1.0) / 2.0, (spec.height as f64 - 1.0) / 2.0);
    (up.x / f, up.y / f, up.z - up.x * cx / f - up.y * cy / f)
}

/// Image of the water plane's vanishing line under the rendered attitude,
/// derived directly from the rotation.
pub fn true_horizon(spec: &SceneSpec, imu: &ImuReading<f64>) -> HorizonLine<f64> {
    let (a, b, c) = horizon_coefficients(spec, imu);
    if !(b.abs() > 1e-12) {
        return HorizonLine::invalid();
    }
    let cx = (spec.width as f64 - 1.0) / 2.0;
    HorizonLine::new((-a / b).atan(), -(a * cx + c) / b, cx)
}

#[derive(Clone, Copy, PartialEq)]
enum Surface {
    Sky,
    Middle,
    Water,
}

/// Obstacle samples per pixel along each axis.
const SUPERSAMPLE: usize = 4;

fn render_view(
    spec: &SceneSpec,
    imu: &ImuReading<f64>,
    index: usize,
    camera: Camera,
) -> (RgbImage, Vec<Option<BoundingBox>>, Vec<Option<u32>>) {
    let (w, h) = (spec.width as usize, spec.height as usize);
    let (a, b, c) = horizon_coefficients(spec, imu);
    let norm = a.hypot(b);
    let mut surface = vec![Surface::Sky; w * h];
    let mut edge = vec![None; w];
    for y in 0..h {
        for x in 0..w {
            let s = (a * x as f64 + b * y as f64 + c) / norm;
            surface[y * w + x] = if s >= 0.0 {
                if edge[x].is_none() {
                    edge[x] = Some(y as u32);
                }
                Surface::Water
            } else if s >= -spec.middle_height {
                Surface::Middle
            } else {
                Surface::Sky
            };
        }
    }

    let view = View::new(spec, imu, camera);
    let mut cover: Vec<Option<(usize, f64, f64)>> = vec![None; w * h];
    let mut order: Vec<usize> = (0..spec.obstacles.len()).collect();
    // painter's order: farthest first
    order.sort_by(|&i, &j| spec.obstacles[j].at_frame(index)[2].total_cmp(&spec.obstacles[i].at_frame(index)[2]));
    for k in order {
        let o = &spec.obstacles[k];
        let center = Vector3::from(o.at_frame(index));
        let (hw, hh) = (o.size[0] / 2.0, o.size[1] / 2.0);
        let corners = [(-hw, -hh), (hw, -hh), (-hw, hh), (hw, hh)].map(|(dx, dy)| view.to_camera(&(center + Vector3::new(dx, dy, 0.0))));
        if corners.iter().any(|p| p.z <= 1e-6) {
            warn!("frame {index}: obstacle {k} behind the {} camera, skipped", camera.name());
            continue;
        }
        let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &corners {
            let (u, v) = (view.focal * p.x / p.z + view.cx, view.focal * p.y / p.z + view.cy);
            u0 = u0.min(u);
            v0 = v0.min(v);
            u1 = u1.max(u);
            v1 = v1.max(v);
        }
        let clip = |x: f64, n: usize| x.clamp(0.0, n as f64 - 1.0) as usize;
        if u1 < 0.0 || v1 < 0.0 || u0 > w as f64 - 1.0 || v0 > h as f64 - 1.0 {
            continue;
        }
        let (xa, xb) = (clip(u0.floor(), w), clip(u1.ceil(), w));
        let (ya, yb) = (clip(v0.floor(), h), clip(v1.ceil(), h));
        for y in ya..=yb {
            for x in xa..=xb {
                // SUPERSAMPLE x SUPERSAMPLE samples per pixel for coverage and mean shade
                let (mut hits, mut shade_sum) = (0usize, 0.0);
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let off = |s: usize| (s as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        let d = view.ray(x as f64 + off(sx), y as f64 + off(sy));
                        if !(d.z > 0.0) {
                            continue;
                        }
                        let t = (center.z - view.origin.z) / d.z;
                        if !(t > 0.0) {
                            continue;
                        }
                        let p = view.origin + d * t;
                        let (lx, ly) = (p.x - center.x, p.y - center.y);
                        let inside = match o.shape {
                            Shape::Rectangle => lx.abs() <= hw && ly.abs() <= hh,
                            Shape::Ellipse => (lx / hw).powi(2) + (ly / hh).powi(2) <= 1.0,
                        };
                        if inside {
                            let cell = spec.obstacle_texture;
                            let parity = ((lx + hw) / cell).floor() as i64 + ((ly + hh) / cell).floor() as i64;
                            hits += 1;
                            shade_sum += if parity.rem_euclid(2) == 0 { 1.0 } else { 0.55 };
                        }
                    }
                }
                if hits > 0 {
                    let coverage = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                    cover[y * w + x] = Some((k, shade_sum / hits as f64, coverage));
                }
            }
        }
    }

    let mut rng = stream(spec.seed, index, NOISE_STREAM + camera as u64);
    let normal = |sigma: f64| Normal::new(0.0, sigma).expect("validated sigma");
    let noise = [
        normal(spec.sky.noise_sigma),
        normal(spec.middle.noise_sigma),
        normal(spec.water.noise_sigma),
        normal(spec.obstacle_noise_sigma),
    ];
    let mut boxes: Vec<Option<(u32, u32, u32, u32)>> = vec![None; spec.obstacles.len()];
    let mut img = RgbImage::new(spec.width, spec.height);
    for (i, s) in surface.iter().enumerate() {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let (band, n) = match *s {
            Surface::Sky => (spec.sky.color, &noise[0]),
            Surface::Middle => (spec.middle.color, &noise[1]),
            Surface::Water => (spec.water.color, &noise[2]),
        };
        let (base, n) = match cover[i] {
            Some((k, shade, coverage)) => {
                if coverage >= 0.5 {
                    let b = boxes[k].get_or_insert((x, y, x, y));
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                }
                let color = spec.obstacles[k].color;
                let mixed: [f64; 3] =
                    std::array::from_fn(|c| coverage * color[c] as f64 * shade + (1.0 - coverage) * band[c] as f64);
                (mixed, if coverage >= 0.5 { &noise[3] } else { n })
            }
            None => (band.map(f64::from), n),
        };
        let sigma = n.std_dev();
        let px = base.map(|v| {
            let e = if sigma > 0.0 { n.sample(&mut rng) } else { 0.0 };
            (v + e).round().clamp(0.0, 255.0) as u8
        });
        img.put_pixel(x, y, Rgb(px));
    }
    let boxes = boxes
        .into_iter()
        .map(|b| b.map(|(x0, y0, x1, y1)| BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)))
        .collect();
    (img, boxes, edge)
}

/// Renders frame `index` of the sequence, artifacts included.
pub fn render_frame(spec: &SceneSpec, index: usize) -> Result<StereoFrame> {
    spec.validate()?;
    let imu = attitude(spec, index)?;
    let horizon = HorizonAnnotation::from_line(&true_horizon(spec, &imu));
    let (left, left_boxes, edge) = render_view(spec, &imu, index, Camera::Left);
    let (right, right_boxes, _) = render_view(spec, &imu, index, Camera::Right);
    let left_view = View::new(spec, &imu, Camera::Left);
    let annotate = |boxes: &[Option<BoundingBox>]| {
        let mut ann = Annotation {
            frame: index,
            edge: edge
                .iter()
                .enumerate()
                .filter_map(|(c, r)| r.map(|r| [c as f64, r as f64]))
                .collect(),
            large_obstacles: Vec::new(),
            small_obstacles: Vec::new(),
            horizon,
            glitter: Vec::new(),
        };
        for (k, b) in boxes.iter().enumerate() {
            let Some(bbox) = b else { continue };
            let depth = left_view.to_camera(&Vector3::from(spec.obstacles[k].at_frame(index))).z;
            let o = ObstacleAnnotation {
                bbox: *bbox,
                id: Some(k),
                disparity: Some(spec.focal * spec.baseline / depth),
            };
            if bbox.area() < spec.small_area {
                ann.small_obstacles.push(o);
            } else {
                ann.large_obstacles.push(o);
            }
        }
        ann
    };
    let truth = [annotate(&left_boxes), annotate(&right_boxes)];
    let mut frame = StereoFrame {
        index,
        left,
        right,
        imu,
        truth,
    };
    inject_artifacts(&mut frame, spec);
    Ok(frame)
}

/// Every frame of the sequence, rendered in order.
pub fn render_sequence(spec: &SceneSpec) -> Result<Vec<StereoFrame>> {
    (0..spec.frames).map(|i| render_frame(spec, i)).collect()
}

fn fill_disk(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in (cy - r).floor() as i64..=(cy + r).ceil() as i64 {
        for x in (cx - r).floor() as i64..=(cx + r).ceil() as i64 {
            if x >= 0 && y >= 0 && x < w && y < h && (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                img.put_pixel(x as u32, y as u32, Rgb(color));
            }
        }
    }
}

fn point_box_gap(px: f64, py: f64, b: &BoundingBox) -> f64 {
    let dx = (b.u as f64 - px).max(px - (b.right() as f64 - 1.0)).max(0.0);
    let dy = (b.v as f64 - py).max(py - (b.bottom() as f64 - 1.0)).max(0.0);
    dx.hypot(dy)
}

/// Paints the reflection patch (same pixels in both views) and independent
/// glitter clusters into each view, recording cluster centers in the truth.
pub fn inject_artifacts(frame: &mut StereoFrame, spec: &SceneSpec) {
    if let Some(r) = &spec.reflection {
        let mut rng = stream(spec.seed, frame.index, REFLECTION_STREAM);
        let [u, v, w, h] = r.rect;
        let stripes = (w / r.stripe_width.max(1) + 1) as usize;
        let gains: Vec<f64> = (0..stripes).map(|_| rng.gen_range(0.4..1.4)).collect();
        for y in v..(v + h).min(spec.height) {
            for x in u..(u + w).min(spec.width) {
                let g = gains[((x - u) / r.stripe_width.max(1)) as usize];
                let px = Rgb(r.color.map(|c| (c as f64 * g).round().clamp(0.0, 255.0) as u8));
                frame.left.put_pixel(x, y, px);
                frame.right.put_pixel(x, y, px);
            }
        }
    }
    let g = &spec.glitter;
    if g.count == 0 {
        return;
    }
    let horizon = frame.truth[0].horizon;
    let epoch = if g.lifetime == 0 { 0 } else { frame.index / g.lifetime };
    for camera in [Camera::Left, Camera::Right] {
        let mut reserved = frame.truth(camera).boxes();
        if let Some(r) = &spec.reflection {
            reserved.push(r.rect.into());
        }
        let bottom = spec.height as f64 - 1.0 - g.radius;
        let centers: Vec<[f64; 2]> = glitter_layout(spec, camera, epoch)
            .into_iter()
            .map(|[x, depth]| [x, horizon.map_or(depth, |hz| hz.row_at(x) + depth)])
            .filter(|&[x, y]| y >= g.radius && y <= bottom && reserved.iter().all(|b| point_box_gap(x, y, b) >= g.clearance))
            .take(g.count)
            .collect();
        if centers.len() < g.count {
            warn!("frame {}: {} of {} glitter clusters clear of obstacles in the {} view", frame.index, centers.len(), g.count, camera.name());
        }
        let mut rng = stream(spec.seed, frame.index, GLITTER_STREAM + camera as u64);
        let img = match camera {
            Camera::Left => &mut frame.left,
            Camera::Right => &mut frame.right,
        };
        for &[cx, cy] in &centers {
            let reach = (g.radius - g.dot_radius).max(0.0);
            for _ in 0..g.dots {
                let rr = reach * rng.gen::<f64>().sqrt();
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                fill_disk(img, cx + rr * th.cos(), cy + rr * th.sin(), g.dot_radius, g.color);
            }
        }
        frame.truth[camera as usize].glitter = centers;
    }
}

const SPARE_ANCHORS: usize = 3;

/// Cluster anchors of one view for one lifetime epoch: column and depth below
/// the horizon, drawn against the horizon of the epoch's first frame. Up to
/// `SPARE_ANCHORS` times the requested count are drawn in priority order so
/// that frames where obstacles cover some anchors can fall back on later ones.
fn glitter_layout(spec: &SceneSpec, camera: Camera, epoch: usize) -> Vec<[f64; 2]> {
    let g = &spec.glitter;
    let (w, h) = (spec.width as f64, spec.height as f64);
    if !(w > 2.0 * g.radius + 1.0 && h > 2.0 * g.radius + 1.0) {
        return Vec::new();
    }
    let first = (epoch * g.lifetime).min(spec.frames.saturating_sub(1));
    let horizon = attitude(spec, first)
        .ok()
        .and_then(|imu| HorizonAnnotation::from_line(&true_horizon(spec, &imu)));
    let mut rng = stream(spec.seed, epoch, GLITTER_LAYOUT_STREAM + camera as u64);
    let mut centers: Vec<[f64; 2]> = Vec::new();
    let mut attempts = 0;
    let target = g.count * SPARE_ANCHORS;
    while centers.len() < target && attempts < 2_000 * target {
        attempts += 1;
        let x = rng.gen_range(g.radius..w - 1.0 - g.radius);
        let y = rng.gen_range(g.radius..h - 1.0 - g.radius);
        let below = horizon.map_or(true, |hz| y - g.radius >= hz.row_at(x) + g.clearance);
        if below && centers.iter().all(|c| (c[0] - x).hypot(c[1] - y) >= g.clearance) {
            centers.push([x, y]);
        }
    }
    if centers.len() < g.count {
        warn!("placed {} of {} glitter clusters in the {} view", centers.len(), g.count, camera.name());
    }
    centers
        .into_iter()
        .map(|[x, y]| [x, y - horizon.map_or(0.0, |hz| hz.row_at(x))])
        .collect()
}

/// Points on flat ground below a level camera, in camera coordinates, with a
/// fraction replaced by outliers uniform in the slab within 5 m of the ground.
pub fn ground_cloud(
    camera_height: f64,
    points: usize,
    outlier_fraction: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<PointCloud<f64>> {
    if !(0.0..=1.0).contains(&outlier_fraction) || !(noise_sigma >= 0.0) {
        return Err(Error::InvalidInput("outlier fraction must lie in [0, 1] and noise be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("non-negative sigma");
    let outliers = (points as f64 * outlier_fraction).round() as usize;
    let pts = (0..points)
        .map(|i| {
            let x = rng.gen_range(-5.0..5.0);
            let z = rng.gen_range(1.0..8.0);
            if i < outliers {
                Vector3::new(x, camera_height + rng.gen_range(-5.0..5.0), z)
            } else {
                let e = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                Vector3::new(x, camera_height + e, z)
            }
        })
        .collect();
    PointCloud::new(pts)
}
