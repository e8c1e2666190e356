use proptest::prelude::{prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seahorizon::detection::{BoundingBox, WaterEdge};
use seahorizon::eval::{edge_error, f_score, match_detections, resample_polyline};

/// Per-column loop: find the bracketing segment by scanning every pair.
fn loop_edge_error(pred: &[Option<u32>], poly: &[[f64; 2]], height: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for (c, p) in pred.iter().enumerate() {
        let Some(p) = p else { continue };
        let x = c as f64;
        let mut gt = None;
        for k in 0..poly.len() {
            if poly[k][0] == x {
                gt = Some(poly[k][1]);
                break;
            }
            if k + 1 < poly.len() && poly[k][0] < x && x < poly[k + 1][0] {
                let t = (x - poly[k][0]) / (poly[k + 1][0] - poly[k][0]);
                gt = Some(poly[k][1] * (1.0 - t) + poly[k + 1][1] * t);
                break;
            }
        }
        if let Some(g) = gt {
            sum += (*p as f64 - g).powi(2);
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt() / height as f64)
}

#[test]
fn edge_error_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..300 {
        let width = rng.gen_range(1..80);
        let height = rng.gen_range(10..100);
        let k = rng.gen_range(1..8);
        let mut cols: Vec<f64> = (0..k).map(|_| rng.gen_range(-10.0..width as f64 + 10.0)).collect();
        if rng.gen_bool(0.3) {
            cols = cols.iter().map(|c: &f64| c.round()).collect();
        }
        cols.sort_by(f64::total_cmp);
        cols.dedup();
        let poly: Vec<[f64; 2]> = cols.iter().map(|&c| [c, rng.gen_range(0.0..height as f64)]).collect();
        let rows: Vec<Option<u32>> = (0..width)
            .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..height as u32)))
            .collect();
        let got = edge_error(&WaterEdge { rows: rows.clone() }, &poly, height);
        let want = loop_edge_error(&rows, &poly, height);
        match (got, want) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} {b}"),
            (a, b) => assert_eq!(a, b),
        }
    }
}

#[test]
fn resampling_hits_vertices() {
    let r = resample_polyline(&[[0.0, 1.0], [4.0, 5.0]], 6);
    assert_eq!(r, vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), None]);
}

/// Maximum number of one-to-one pairs with IoU at or above the threshold.
fn exhaustive_tp(pred: &[BoundingBox], gt: &[BoundingBox], thr: f64) -> usize {
    fn rec(i: usize, pred: &[BoundingBox], gt: &[BoundingBox], used: &mut Vec<bool>, thr: f64) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = rec(i + 1, pred, gt, used, thr);
        for j in 0..gt.len() {
            let iou = pred[i].iou(&gt[j]);
            if !used[j] && iou >= thr && iou > 0.0 {
                used[j] = true;
                best = best.max(1 + rec(i + 1, pred, gt, used, thr));
                used[j] = false;
            }
        }
        best
    }
    rec(0, pred, gt, &mut vec![false; gt.len()], thr)
}

fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<BoundingBox> {
    (0..n)
        .map(|_| BoundingBox::new(rng.gen_range(0..30), rng.gen_range(0..30), rng.gen_range(3..15), rng.gen_range(3..15)))
        .collect()
}

#[test]
fn greedy_agrees_with_exhaustive_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 2000;
    let mut disagreements = 0;
    for _ in 0..trials {
        let n = rng.gen_range(0..=4);
        let pred = random_boxes(&mut rng, n);
        let n = rng.gen_range(0..=4);
        let gt = random_boxes(&mut rng, n);
        let c = match_detections(&pred, &gt, 0.3);
        assert_eq!(c.tp + c.fp, pred.len());
        assert_eq!(c.tp + c.fn_, gt.len());
        let best = exhaustive_tp(&pred, &gt, 0.3);
        assert!(c.tp <= best);
        if c.tp != best {
            disagreements += 1;
            eprintln!("greedy {} vs optimal {best}: {pred:?} {gt:?}", c.tp);
        }
    }
    assert!((disagreements as f64) < 0.01 * trials as f64, "{disagreements} disagreements");
}

/// Published (TP, FP, FN, F) rows of the reference results table.
const TABLE: [(usize, usize, usize, f64); 8] = [
    (264, 1156, 624, 0.229),
    (682, 1708, 206, 0.416),
    (628, 1643, 260, 0.398),
    (418, 1385, 470, 0.311),
    (618, 1513, 270, 0.409),
    (441, 1604, 447, 0.301),
    (215, 105, 673, 0.356),
    (617, 82, 271, 0.778),
];

#[test]
fn f_score_reproduces_published_rows() {
    for (tp, fp, fn_, f) in TABLE {
        assert!((f_score(tp, fp, fn_) - f).abs() <= 0.002, "{tp} {fp} {fn_}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn unmatched_prediction_adds_one_false_positive(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(0..6);
        let mut pred = random_boxes(&mut rng, n);
        let n = rng.gen_range(0..6);
        let gt = random_boxes(&mut rng, n);
        let before = match_detections(&pred, &gt, 0.3);
        // far away from every box, so it can match nothing
        pred.insert(rng.gen_range(0..=pred.len()), BoundingBox::new(500, 500, 5, 5));
        let after = match_detections(&pred, &gt, 0.3);
        prop_assert_eq!(after.fp, before.fp + 1);
        prop_assert_eq!(after.tp, before.tp);
    }
}
