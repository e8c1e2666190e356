use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use seahorizon::detection::{Camera, DetectionRecord};
use seahorizon::eval::{aggregate, score_records, write_report_csv, write_report_json, Annotation, SequenceReport};
use seahorizon::geometry::io::CameraDoc;

use crate::config::Config;
use crate::Failure;

/// Every `NNNNNN.json` under `root/left` and `root/right`. Any file that
/// fails to parse aborts the evaluation.
fn read_annotations(root: &Path) -> Result<BTreeMap<(usize, Camera), Annotation>> {
    let mut out = BTreeMap::new();
    for camera in [Camera::Left, Camera::Right] {
        let dir = root.join(camera.name());
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<(usize, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Ok(i) = stem.parse() {
                files.push((i, path));
            }
        }
        files.sort();
        for (index, path) in files {
            let ann = Annotation::read(&path).map_err(|e| Failure::Unparseable(e.to_string()))?;
            out.insert((index, camera), ann);
        }
    }
    if out.is_empty() {
        return Err(Failure::InsufficientData(format!("no annotations under {}", root.display())).into());
    }
    Ok(out)
}

fn read_records(path: &Path) -> Result<Vec<DetectionRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(|e| Failure::Unparseable(format!("{}: {e}", path.display())))?)
}

fn split_label(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((m, p)) if !m.is_empty() => (m.to_string(), PathBuf::from(p)),
        _ => {
            let p = PathBuf::from(arg);
            let m = p.file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (m, p)
        }
    }
}

pub fn run(cfg: &Config, detections: &[String], height: Option<usize>) -> Result<()> {
    let ann_root = cfg.input("annotations", &cfg.paths.annotations, |l| l.root.join("annotations"))?;
    let truth = read_annotations(&ann_root)?;
    let height = match height {
        Some(h) => h,
        None => {
            let p = cfg.input("camera", &cfg.paths.camera, |l| l.camera())?;
            CameraDoc::read(&p).map_err(|e| Failure::Unparseable(e.to_string()))?.height as usize
        }
    };
    let mut reports: Vec<SequenceReport> = Vec::new();
    for arg in detections {
        let (method, path) = split_label(arg);
        let records = read_records(&path)?;
        let scores = score_records(&records, &truth, height, cfg.eval.iou_threshold);
        if scores.is_empty() {
            return Err(Failure::InsufficientData(format!("{}: no record has a matching annotation", path.display())).into());
        }
        reports.push(aggregate(&method, &scores)?);
    }
    println!(
        "{:<12} {:>8} {:>9} {:>6} {:>6} {:>6} {:>6} {:>7}",
        "method", "mu_edg", "sigma_edg", "TP", "FP", "FN", "F", "aFP"
    );
    for r in &reports {
        println!(
            "{:<12} {:>8.4} {:>9.4} {:>6} {:>6} {:>6} {:>6.3} {:>7.3}",
            r.method, r.mu_edg, r.sigma_edg, r.tp, r.fp, r.fn_, r.f_score, r.afp
        );
    }
    if let Some(dir) = &cfg.paths.output {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_report_json(dir.join("report.json"), &reports)?;
        write_report_csv(dir.join("report.csv"), &reports)?;
    }
    Ok(())
}
