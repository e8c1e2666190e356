//! Water-edge accuracy and detection counts against ground truth.

mod annotation;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use annotation::{Annotation, HorizonAnnotation, ObstacleAnnotation};

use crate::detection::{BoundingBox, Camera, DetectionRecord, WaterEdge};
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

/// Polyline sampled at every integer column in `0..width` by linear
/// interpolation; columns outside the polyline's span are `None`.
/// Vertices are sorted by column; on duplicate columns the first wins.
pub fn resample_polyline(poly: &[[f64; 2]], width: usize) -> Vec<Option<f64>> {
    let mut pts: Vec<[f64; 2]> = poly.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    pts.dedup_by(|b, a| a[0] == b[0]);
    let mut out = vec![None; width];
    if pts.is_empty() {
        return out;
    }
    let mut seg = 0;
    for (c, slot) in out.iter_mut().enumerate() {
        let x = c as f64;
        if x < pts[0][0] || x > pts[pts.len() - 1][0] {
            continue;
        }
        while seg + 1 < pts.len() && pts[seg + 1][0] < x {
            seg += 1;
        }
        let a = pts[seg];
        *slot = if a[0] == x || seg + 1 == pts.len() {
            Some(a[1])
        } else {
            let b = pts[seg + 1];
            Some(a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0]))
        };
    }
    out
}

/// RMSE between predicted and annotated edge rows over columns valid in
/// both, divided by `height`. `None` when no column is valid in both.
pub fn edge_error(pred: &WaterEdge, gt: &[[f64; 2]], height: usize) -> Option<f64> {
    let truth = resample_polyline(gt, pred.rows.len());
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, t) in pred.rows.iter().zip(&truth) {
        if let (Some(p), Some(t)) = (p, t) {
            let d = *p as f64 - t;
            sum += d * d;
            n += 1;
        }
    }
    (n > 0 && height > 0).then(|| (sum / n as f64).sqrt() / height as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Greedy one-to-one matching by descending IoU; pairs at or above
/// `threshold` are true positives.
pub fn match_detections(pred: &[BoundingBox], gt: &[BoundingBox], threshold: f64) -> MatchCounts {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let iou = p.iou(g);
            if iou >= threshold && iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    MatchCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
    }
}

/// `2TP / (2TP + FP + FN)`, zero when all counts are zero.
pub fn f_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        (2 * tp) as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub camera: Camera,
    /// Normalized edge RMSE; `None` when undefined for this frame.
    pub edge_rmse: Option<f64>,
    #[serde(flatten)]
    pub counts: MatchCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub method: String,
    pub frames: usize,
    /// Frames contributing to the edge statistics.
    pub edge_frames: usize,
    pub mu_edg: f64,
    pub sigma_edg: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f_score: f64,
    pub afp: f64,
}

/// Totals and edge statistics over frames weighted equally. The edge spread
/// is the population standard deviation.
pub fn aggregate(method: &str, scores: &[FrameScore]) -> Result<SequenceReport> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("no frames to aggregate".into()));
    }
    let edges: Vec<f64> = scores.iter().filter_map(|s| s.edge_rmse).collect();
    let (mu, sigma) = if edges.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let n = edges.len() as f64;
        let mu = edges.iter().sum::<f64>() / n;
        (mu, (edges.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / n).sqrt())
    };
    let tp = scores.iter().map(|s| s.counts.tp).sum();
    let fp = scores.iter().map(|s| s.counts.fp).sum();
    let fn_ = scores.iter().map(|s| s.counts.fn_).sum();
    Ok(SequenceReport {
        method: method.to_string(),
        frames: scores.len(),
        edge_frames: edges.len(),
        mu_edg: mu,
        sigma_edg: sigma,
        tp,
        fp,
        fn_,
        f_score: f_score(tp, fp, fn_),
        afp: fp as f64 / scores.len() as f64,
    })
}

/// Scores every record that has an annotation for its frame and camera.
/// Records without ground truth are skipped.
pub fn score_records(
    records: &[DetectionRecord],
    truth: &BTreeMap<(usize, Camera), Annotation>,
    height: usize,
    iou_threshold: f64,
) -> Vec<FrameScore> {
    records
        .iter()
        .filter_map(|r| {
            let gt = truth.get(&(r.frame, r.camera))?;
            Some(FrameScore {
                frame: r.frame,
                camera: r.camera,
                edge_rmse: r.edge.as_ref().and_then(|e| edge_error(e, &gt.edge, height)),
                counts: match_detections(&r.boxes, &gt.boxes(), iou_threshold),
            })
        })
        .collect()
}

pub fn write_report_json(path: impl AsRef<Path>, reports: &[SequenceReport]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serde_json::to_string_pretty(reports)? + "\n").map_err(|e| Error::io(path, e))
}

/// One row per report with columns `method, mu_edg, sigma_edg, TP, FP, FN, F, aFP`.
pub fn write_report_csv(path: impl AsRef<Path>, reports: &[SequenceReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "mu_edg", "sigma_edg", "TP", "FP", "FN", "F", "aFP"])?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            format!("{:.6}", r.mu_edg),
            format!("{:.6}", r.sigma_edg),
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
            format!("{:.3}", r.f_score),
            format!("{:.3}", r.afp),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
