//! Stereo consolidation of tentative detections: epipolar gating, NCC
//! verification, greedy pairing and a second-chance search for leftovers.

mod epipolar;
mod ncc;

use std::fs;
use std::path::Path;

use image::RgbImage;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use epipolar::{epipolar_candidates, point_line_distance, Candidates, StereoGeometry, RANK_TOL};
pub use ncc::{ncc_map, ncc_match, NccMap, NccPeak};

use crate::detection::{BoundingBox, Camera, Detection, DetectionRecord, WaterEdge};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Rig extrinsics `X_r = R X_l + t` (meters), as stored next to a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoDoc {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl StereoDoc {
    /// Parallel cameras with the right one `baseline` meters to the right.
    pub fn parallel(baseline: f64) -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [-baseline, 0.0, 0.0],
        }
    }

    pub fn geometry(&self, left: &CameraIntrinsics<f64>, right: &CameraIntrinsics<f64>) -> Result<StereoGeometry> {
        StereoGeometry::from_extrinsics(
            &left.k_matrix(),
            &right.k_matrix(),
            &Matrix3::from_row_slice(&self.rotation),
            &Vector3::from(self.translation),
            (left.width, left.height),
            (right.width, right.height),
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    /// Enlargement of the partner box when searching for a pair.
    pub theta_s1: f64,
    /// Enlargement of a leftover's own box when searching the other view.
    pub theta_s2: f64,
    pub theta_ncc: f64,
    /// Minimum slack (pixels per side) between template and search region;
    /// covers box quantization from the working grid.
    pub search_margin: (u32, u32),
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            theta_s1: 1.2,
            theta_s2: 3.0,
            theta_ncc: 0.95,
            search_margin: (1, 1),
        }
    }
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_s1 >= 1.0 && self.theta_s2 >= self.theta_s1) {
            return Err(Error::InvalidInput(format!(
                "need theta_s2 >= theta_s1 >= 1, got {} and {}",
                self.theta_s1, self.theta_s2
            )));
        }
        if !(self.theta_ncc > 0.0 && self.theta_ncc < 1.0) {
            return Err(Error::InvalidInput(format!("theta_ncc {} outside (0, 1)", self.theta_ncc)));
        }
        Ok(())
    }
}

/// Outcome for one left/right pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub left: usize,
    pub right: Option<usize>,
    pub peak: f64,
    /// Top-left corner of the best template placement, in the image that was
    /// searched.
    pub location: (u32, u32),
    pub accepted: bool,
}

/// Region of `size` centered on `center_box`, clipped to the image.
fn centered_region(center_box: &BoundingBox, size: (u32, u32), img_w: u32, img_h: u32) -> BoundingBox {
    let x0 = center_box.u as i64 + (center_box.w as i64 - size.0 as i64).div_euclid(2);
    let y0 = center_box.v as i64 + (center_box.h as i64 - size.1 as i64).div_euclid(2);
    let x1 = (x0 + size.0 as i64).min(img_w as i64);
    let y1 = (y0 + size.1 as i64).min(img_h as i64);
    let (x0, y0) = (x0.max(0), y0.max(0));
    BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0).max(0) as u32, (y1 - y0).max(0) as u32)
}

fn crop(img: &RgbImage, b: &BoundingBox) -> RgbImage {
    image::imageops::crop_imm(img, b.u, b.v, b.w, b.h).to_image()
}

/// Searches for `template_box` of `source` inside `region` of `target`.
/// `None` when the clipped region cannot hold the template with slack.
fn search(source: &RgbImage, template_box: &BoundingBox, target: &RgbImage, region: &BoundingBox) -> Option<NccPeak> {
    if region.w <= template_box.w || region.h <= template_box.h {
        return None;
    }
    let tpl = crop(source, template_box);
    let peak = ncc_match(&tpl, &crop(target, region)).ok()?;
    Some(NccPeak {
        value: peak.value,
        location: (region.u + peak.location.0, region.v + peak.location.1),
    })
}

fn enlarged(b: &BoundingBox, factor: f64) -> (u32, u32) {
    ((b.w as f64 * factor).ceil() as u32, (b.h as f64 * factor).ceil() as u32)
}

/// Template from `det` searched around `partner` in `target`, over the
/// partner box enlarged by `theta_s1` but never tighter than the template
/// plus the configured margin.
fn pair_score(
    det: &Detection,
    source: &RgbImage,
    partner: &Detection,
    target: &RgbImage,
    cfg: &VerificationConfig,
) -> Option<NccPeak> {
    let (ew, eh) = enlarged(&partner.bbox, cfg.theta_s1);
    let size = (
        ew.max(det.bbox.w + 2 * cfg.search_margin.0),
        eh.max(det.bbox.h + 2 * cfg.search_margin.1),
    );
    let region = centered_region(&partner.bbox, size, target.width(), target.height());
    search(source, &det.bbox, target, &region)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoMatches {
    pub pairs: Vec<MatchResult>,
    pub unmatched_left: Vec<usize>,
    pub unmatched_right: Vec<usize>,
    /// Epipolar gating was skipped because the geometry is unusable.
    pub degenerate: bool,
}

/// Best NCC peak for every left/right pair that passes the epipolar gate in
/// either direction, taking the better of the two template directions.
/// Entries are `None` for pairs outside the gate or without a usable region.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    pub scores: Vec<Vec<Option<NccPeak>>>,
    pub degenerate: bool,
}

pub fn pair_scores(
    left: &[Detection],
    right: &[Detection],
    left_img: &RgbImage,
    right_img: &RgbImage,
    geom: &StereoGeometry,
    cfg: &VerificationConfig,
) -> PairScores {
    let mut considered = vec![vec![false; right.len()]; left.len()];
    let mut degenerate = false;
    for (i, d) in left.iter().enumerate() {
        let c = epipolar_candidates(d, geom, right);
        degenerate |= c.degenerate;
        for j in c.indices {
            considered[i][j] = true;
        }
    }
    let back = geom.transposed();
    for (j, d) in right.iter().enumerate() {
        // F^T maps right pixels to left lines; treat the right view as the
        // left camera of the transposed rig
        let as_left = Detection {
            camera: Camera::Left,
            ..*d
        };
        let c = epipolar_candidates(&as_left, &back, left);
        degenerate |= c.degenerate;
        for i in c.indices {
            considered[i][j] = true;
        }
    }
    let scores = left
        .iter()
        .enumerate()
        .map(|(i, li)| {
            right
                .iter()
                .enumerate()
                .map(|(j, rj)| {
                    if !considered[i][j] {
                        return None;
                    }
                    let forward = pair_score(li, left_img, rj, right_img, cfg);
                    let backward = pair_score(rj, right_img, li, left_img, cfg);
                    match (forward, backward) {
                        (Some(f), Some(b)) => Some(if b.value > f.value { b } else { f }),
                        (f, b) => f.or(b),
                    }
                })
                .collect()
        })
        .collect();
    PairScores { scores, degenerate }
}

/// Pairs left and right detections greedily by descending NCC peak among
/// pairs scoring at least `theta_ncc`.
pub fn verify_pair(
    left: &[Detection],
    right: &[Detection],
    left_img: &RgbImage,
    right_img: &RgbImage,
    geom: &StereoGeometry,
    cfg: &VerificationConfig,
) -> Result<StereoMatches> {
    cfg.validate()?;
    let PairScores { scores, degenerate } = pair_scores(left, right, left_img, right_img, geom, cfg);
    let mut scored: Vec<(f64, usize, usize, (u32, u32))> = Vec::new();
    for (i, row) in scores.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            if let Some(p) = p {
                if p.value >= cfg.theta_ncc {
                    scored.push((p.value, i, j, p.location));
                }
            }
        }
    }
    let key = |i: usize, j: usize| {
        let (a, b) = (left[i].bbox, right[j].bbox);
        (a.min(b), a.max(b))
    };
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| key(a.1, a.2).cmp(&key(b.1, b.2))));
    let mut left_used = vec![false; left.len()];
    let mut right_used = vec![false; right.len()];
    let mut pairs = Vec::new();
    for (peak, i, j, location) in scored {
        if left_used[i] || right_used[j] {
            continue;
        }
        left_used[i] = true;
        right_used[j] = true;
        pairs.push(MatchResult {
            left: i,
            right: Some(j),
            peak,
            location,
            accepted: true,
        });
    }
    Ok(StereoMatches {
        pairs,
        unmatched_left: (0..left.len()).filter(|&i| !left_used[i]).collect(),
        unmatched_right: (0..right.len()).filter(|&j| !right_used[j]).collect(),
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescueReason {
    Accepted,
    LowScore,
    /// The search region, clipped to the image, cannot contain the template.
    Border,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescueResult {
    pub index: usize,
    pub peak: Option<f64>,
    pub reason: RescueReason,
}

impl RescueResult {
    pub fn accepted(&self) -> bool {
        self.reason == RescueReason::Accepted
    }
}

/// Looks for each leftover detection of `source` at the same coordinates of
/// `opposite`, in its box enlarged by `theta_s2`.
pub fn rescue_unmatched(
    unmatched: &[usize],
    dets: &[Detection],
    source: &RgbImage,
    opposite: &RgbImage,
    cfg: &VerificationConfig,
) -> Vec<RescueResult> {
    unmatched
        .iter()
        .map(|&index| {
            let d = &dets[index];
            let region = centered_region(&d.bbox, enlarged(&d.bbox, cfg.theta_s2), opposite.width(), opposite.height());
            match search(source, &d.bbox, opposite, &region) {
                None => RescueResult {
                    index,
                    peak: None,
                    reason: RescueReason::Border,
                },
                Some(p) => RescueResult {
                    index,
                    peak: Some(p.value),
                    reason: if p.value >= cfg.theta_ncc {
                        RescueReason::Accepted
                    } else {
                        RescueReason::LowScore
                    },
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifiedDetection {
    pub detection: Detection,
    pub pair_id: Option<usize>,
    pub ncc_peak: f64,
    pub rescued: bool,
}

/// Detections that survived stereo verification, per camera, in their
/// original order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifiedSet {
    pub left: Vec<VerifiedDetection>,
    pub right: Vec<VerifiedDetection>,
}

impl VerifiedSet {
    pub fn len(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn camera(&self, camera: Camera) -> &[VerifiedDetection] {
        match camera {
            Camera::Left => &self.left,
            Camera::Right => &self.right,
        }
    }

    pub fn record(&self, frame: usize, camera: Camera, edge: Option<WaterEdge>) -> DetectionRecord {
        let v = self.camera(camera);
        let dets: Vec<Detection> = v.iter().map(|d| d.detection).collect();
        DetectionRecord {
            pair_id: Some(v.iter().map(|d| d.pair_id).collect()),
            ncc_peak: Some(v.iter().map(|d| Some(d.ncc_peak)).collect()),
            rescued: Some(v.iter().map(|d| d.rescued).collect()),
            ..DetectionRecord::new(frame, camera, &dets, edge)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoOutcome {
    pub matches: StereoMatches,
    pub rescued_left: Vec<RescueResult>,
    pub rescued_right: Vec<RescueResult>,
    pub verified: VerifiedSet,
}

/// Full stereo verification of one synchronized frame pair.
pub fn verify_stereo(
    left: &[Detection],
    right: &[Detection],
    left_img: &RgbImage,
    right_img: &RgbImage,
    geom: &StereoGeometry,
    cfg: &VerificationConfig,
) -> Result<StereoOutcome> {
    let matches = verify_pair(left, right, left_img, right_img, geom, cfg)?;
    let rescued_left = rescue_unmatched(&matches.unmatched_left, left, left_img, right_img, cfg);
    let rescued_right = rescue_unmatched(&matches.unmatched_right, right, right_img, left_img, cfg);

    let collect = |dets: &[Detection], side: Camera, rescues: &[RescueResult]| {
        let mut out: Vec<(usize, VerifiedDetection)> = Vec::new();
        for (pid, m) in matches.pairs.iter().enumerate() {
            let idx = match side {
                Camera::Left => m.left,
                Camera::Right => m.right.expect("accepted pairs have a right index"),
            };
            out.push((
                idx,
                VerifiedDetection {
                    detection: dets[idx],
                    pair_id: Some(pid),
                    ncc_peak: m.peak,
                    rescued: false,
                },
            ));
        }
        for r in rescues.iter().filter(|r| r.accepted()) {
            out.push((
                r.index,
                VerifiedDetection {
                    detection: dets[r.index],
                    pair_id: None,
                    ncc_peak: r.peak.unwrap_or(0.0),
                    rescued: true,
                },
            ));
        }
        out.sort_by_key(|(i, _)| *i);
        out.into_iter().map(|(_, v)| v).collect::<Vec<_>>()
    };
    let verified = VerifiedSet {
        left: collect(left, Camera::Left, &rescued_left),
        right: collect(right, Camera::Right, &rescued_right),
    };
    Ok(StereoOutcome {
        matches,
        rescued_left,
        rescued_right,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rig(w: u32, h: u32) -> StereoGeometry {
        let k = Matrix3::new(500.0, 0.0, w as f64 / 2.0, 0.0, 500.0, h as f64 / 2.0, 0.0, 0.0, 1.0);
        StereoGeometry::from_extrinsics(&k, &k, &Matrix3::identity(), &Vector3::new(-0.3, 0.0, 0.0), (w, h), (w, h))
            .unwrap()
    }

    fn noise(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |_, _| {
            let v = rng.gen_range(90..110u8);
            Rgb([v / 3, v / 2, v])
        })
    }

    fn paint(img: &mut RgbImage, x: u32, y: u32, pattern: &RgbImage) {
        for (px, py, p) in pattern.enumerate_pixels() {
            img.put_pixel(x + px, y + py, *p);
        }
    }

    fn object(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]))
    }

    fn det(b: BoundingBox, camera: Camera) -> Detection {
        Detection {
            bbox: b,
            area: b.area() as usize,
            camera,
        }
    }

    #[test]
    fn shifted_object_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (200, 120);
        let obj = object(&mut rng, 16, 12);
        let mut left = noise(&mut rng, w, h);
        let mut right = noise(&mut rng, w, h);
        paint(&mut left, 100, 60, &obj);
        paint(&mut right, 88, 60, &obj);
        let l = [det(BoundingBox::new(100, 60, 16, 12), Camera::Left)];
        let r = [det(BoundingBox::new(88, 60, 16, 12), Camera::Right)];
        let out = verify_stereo(&l, &r, &left, &right, &rig(w, h), &VerificationConfig::default()).unwrap();
        assert_eq!(out.matches.pairs.len(), 1);
        assert!(out.matches.pairs[0].peak >= 0.99);
        assert_eq!(out.verified.left[0].pair_id, Some(0));
    }

    #[test]
    fn one_sided_object_stays_unmatched_and_is_discarded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (200, 120);
        let obj = object(&mut rng, 16, 12);
        let mut left = noise(&mut rng, w, h);
        let right = noise(&mut rng, w, h);
        paint(&mut left, 100, 60, &obj);
        let l = [det(BoundingBox::new(100, 60, 16, 12), Camera::Left)];
        let out = verify_stereo(&l, &[], &left, &right, &rig(w, h), &VerificationConfig::default()).unwrap();
        assert!(out.matches.pairs.is_empty());
        assert_eq!(out.matches.unmatched_left, vec![0]);
        assert_eq!(out.rescued_left[0].reason, RescueReason::LowScore);
        assert!(out.verified.is_empty());
    }

    #[test]
    fn missed_detection_is_rescued() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (200, 120);
        let obj = object(&mut rng, 16, 12);
        let mut left = noise(&mut rng, w, h);
        let mut right = noise(&mut rng, w, h);
        paint(&mut left, 100, 60, &obj);
        paint(&mut right, 90, 60, &obj);
        let l = [det(BoundingBox::new(100, 60, 16, 12), Camera::Left)];
        let out = verify_stereo(&l, &[], &left, &right, &rig(w, h), &VerificationConfig::default()).unwrap();
        assert!(out.rescued_left[0].accepted());
        assert!(out.verified.left[0].rescued);
    }

    #[test]
    fn corner_box_larger_than_clipped_region_is_border() {
        let img = RgbImage::new(40, 40);
        let d = [det(BoundingBox::new(0, 0, 40, 40), Camera::Left)];
        let r = rescue_unmatched(&[0], &d, &img, &img, &VerificationConfig::default());
        assert_eq!(r[0].reason, RescueReason::Border);
    }

    #[test]
    fn config_validation() {
        assert!(VerificationConfig::default().validate().is_ok());
        let bad = VerificationConfig {
            theta_s2: 1.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
