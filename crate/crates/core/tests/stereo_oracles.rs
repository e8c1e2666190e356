use std::collections::BTreeSet;

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seahorizon::detection::{BoundingBox, Camera, Detection};
use seahorizon::stereo::{
    epipolar_candidates, ncc_map, pair_scores, verify_pair, verify_stereo, StereoGeometry, VerificationConfig,
};

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32, levels: u8) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| {
        Rgb([rng.gen_range(0..levels), rng.gen_range(0..levels), rng.gen_range(0..levels)])
    })
}

/// Straight per-offset, per-channel NCC with float means.
fn brute_ncc(t: &RgbImage, s: &RgbImage) -> Vec<f64> {
    let (tw, th) = (t.width(), t.height());
    let (mw, mh) = (s.width() - tw + 1, s.height() - th + 1);
    let n = (tw * th) as f64;
    let mut out = Vec::new();
    for oy in 0..mh {
        for ox in 0..mw {
            let mut total = 0.0;
            for c in 0..3 {
                let tv: Vec<f64> = t.pixels().map(|p| p[c] as f64).collect();
                let mut wv = Vec::new();
                for y in 0..th {
                    for x in 0..tw {
                        wv.push(s.get_pixel(ox + x, oy + y)[c] as f64);
                    }
                }
                let flat = |v: &[f64]| v.iter().all(|&a| a == v[0]);
                if flat(&tv) || flat(&wv) {
                    continue;
                }
                let mt = tv.iter().sum::<f64>() / n;
                let mw_ = wv.iter().sum::<f64>() / n;
                let mut num = 0.0;
                let mut dt = 0.0;
                let mut dw = 0.0;
                for (a, b) in tv.iter().zip(&wv) {
                    num += (a - mt) * (b - mw_);
                    dt += (a - mt) * (a - mt);
                    dw += (b - mw_) * (b - mw_);
                }
                total += num / (dt * dw).sqrt();
            }
            out.push(total / 3.0);
        }
    }
    out
}

#[test]
fn ncc_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let (tw, th, sw, sh) = if case < 100 {
            (9, 9, 31, 31)
        } else {
            let tw = rng.gen_range(1..12);
            let th = rng.gen_range(1..12);
            (tw, th, tw + rng.gen_range(1..15), th + rng.gen_range(1..15))
        };
        // few levels produce flat windows and exact ties now and then
        let levels = if case % 4 == 0 { 2 } else { 255 };
        let t = random_image(&mut rng, tw, th, levels);
        let mut s = random_image(&mut rng, sw, sh, levels);
        if case % 3 == 0 {
            let (x, y) = (rng.gen_range(0..=sw - tw), rng.gen_range(0..=sh - th));
            for (px, py, p) in t.enumerate_pixels() {
                s.put_pixel(x + px, y + py, *p);
            }
        }
        let map = ncc_map(&t, &s).unwrap();
        let oracle = brute_ncc(&t, &s);
        assert_eq!(map.scores.len(), oracle.len());
        for (a, b) in map.scores.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "case {case}: {a} vs {b}");
        }
    }
}

fn k(w: u32, h: u32) -> Matrix3<f64> {
    Matrix3::new(600.0, 0.0, w as f64 / 2.0, 0.0, 600.0, h as f64 / 2.0, 0.0, 0.0, 1.0)
}

fn random_rig(rng: &mut ChaCha8Rng) -> StereoGeometry {
    let r = Rotation3::from_euler_angles(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
    let t = Vector3::new(rng.gen_range(-0.5..-0.1), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
    StereoGeometry::from_extrinsics(&k(640, 480), &k(640, 480), r.matrix(), &t, (640, 480), (640, 480)).unwrap()
}

/// Distance from `q` to the line through two of its points.
fn two_point_distance(l: &Vector3<f64>, q: (f64, f64)) -> f64 {
    let (p1, p2) = if l.y.abs() > l.x.abs() {
        ((0.0, -l.z / l.y), (640.0, -(l.x * 640.0 + l.z) / l.y))
    } else {
        ((-l.z / l.x, 0.0), (-(l.y * 480.0 + l.z) / l.x, 480.0))
    };
    let (dx, dy) = (p2.0 - p1.0, p2.1 - p1.1);
    ((dx * (q.1 - p1.1) - dy * (q.0 - p1.0)) / dx.hypot(dy)).abs()
}

fn random_box(rng: &mut ChaCha8Rng, max_w: u32, max_h: u32) -> BoundingBox {
    let w = rng.gen_range(2..40);
    let h = rng.gen_range(2..40);
    BoundingBox::new(rng.gen_range(0..max_w - w), rng.gen_range(0..max_h - h), w, h)
}

fn det(bbox: BoundingBox, camera: Camera) -> Detection {
    Detection {
        bbox,
        area: bbox.area() as usize,
        camera,
    }
}

#[test]
fn epipolar_candidates_match_two_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut included = 0;
    let mut excluded = 0;
    for _ in 0..200 {
        let geom = random_rig(&mut rng);
        let camera = if rng.gen_bool(0.5) { Camera::Left } else { Camera::Right };
        let d = det(random_box(&mut rng, 640, 480), camera);
        let (cx, cy) = d.bbox.center();
        let line = match camera {
            Camera::Left => geom.f * Vector3::new(cx, cy, 1.0),
            Camera::Right => geom.f.transpose() * Vector3::new(cx, cy, 1.0),
        };
        let others: Vec<Detection> = (0..10).map(|_| det(random_box(&mut rng, 640, 480), camera.opposite())).collect();
        let got = epipolar_candidates(&d, &geom, &others);
        assert!(!got.degenerate);
        let radius = d.bbox.diagonal();
        let mut expected = Vec::new();
        for (i, o) in others.iter().enumerate() {
            let dist = two_point_distance(&line, o.bbox.center());
            if (dist - radius).abs() < 1e-6 {
                continue;
            }
            if dist <= radius {
                expected.push(i);
            }
        }
        let got: Vec<usize> = got
            .indices
            .into_iter()
            .filter(|&i| (two_point_distance(&line, others[i].bbox.center()) - radius).abs() >= 1e-6)
            .collect();
        included += expected.len();
        excluded += others.len() - expected.len();
        assert_eq!(got, expected);
    }
    assert!(included > 50 && excluded > 50, "{included} {excluded}");
}

struct Scene {
    left: RgbImage,
    right: RgbImage,
    left_dets: Vec<Detection>,
    right_dets: Vec<Detection>,
}

fn rectified(w: u32, h: u32) -> StereoGeometry {
    StereoGeometry::from_extrinsics(&k(w, h), &k(w, h), &Matrix3::identity(), &Vector3::new(-0.3, 0.0, 0.0), (w, h), (w, h))
        .unwrap()
}

fn background(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| {
        let v = rng.gen_range(100..120u8);
        Rgb([v / 4, v / 2, v])
    })
}

/// Textured objects at random disparities plus one-view phantoms.
fn scene(rng: &mut ChaCha8Rng, objects: usize, phantoms: usize) -> Scene {
    let (w, h) = (320, 200);
    let mut left = background(rng, w, h);
    let mut right = background(rng, w, h);
    let mut left_dets = Vec::new();
    let mut right_dets = Vec::new();
    for _ in 0..objects {
        let (ow, oh) = (rng.gen_range(8..20), rng.gen_range(6..16));
        let disp = rng.gen_range(5..20);
        let (x, y) = (rng.gen_range(disp + 2..w - ow - 2), rng.gen_range(2..h - oh - 2));
        let pattern = random_image(rng, ow, oh, 255);
        for (px, py, p) in pattern.enumerate_pixels() {
            left.put_pixel(x + px, y + py, *p);
            right.put_pixel(x - disp + px, y + py, *p);
        }
        left_dets.push(det(BoundingBox::new(x, y, ow, oh), Camera::Left));
        right_dets.push(det(BoundingBox::new(x - disp, y, ow, oh), Camera::Right));
    }
    for _ in 0..phantoms {
        let (ow, oh) = (rng.gen_range(4..10), rng.gen_range(4..10));
        let (x, y) = (rng.gen_range(0..w - ow), rng.gen_range(0..h - oh));
        let on_left = rng.gen_bool(0.5);
        let img = if on_left { &mut left } else { &mut right };
        for py in 0..oh {
            for px in 0..ow {
                if rng.gen_bool(0.6) {
                    img.put_pixel(x + px, y + py, Rgb([255, 255, 255]));
                }
            }
        }
        let d = BoundingBox::new(x, y, ow, oh);
        if on_left {
            left_dets.push(det(d, Camera::Left));
        } else {
            right_dets.push(det(d, Camera::Right));
        }
    }
    Scene {
        left,
        right,
        left_dets,
        right_dets,
    }
}

fn pair_set(left: &[Detection], right: &[Detection], pairs: &[(usize, usize)]) -> BTreeSet<(BoundingBox, BoundingBox)> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (left[i].bbox, right[j].bbox);
            (a.min(b), a.max(b))
        })
        .collect()
}

#[test]
fn swapping_views_gives_same_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = VerificationConfig::default();
    for _ in 0..30 {
        let s = scene(&mut rng, 4, 6);
        let geom = rectified(320, 200);
        let m = verify_pair(&s.left_dets, &s.right_dets, &s.left, &s.right, &geom, &cfg).unwrap();
        let relabel = |d: &[Detection], c: Camera| d.iter().map(|x| Detection { camera: c, ..*x }).collect::<Vec<_>>();
        let sl = relabel(&s.right_dets, Camera::Left);
        let sr = relabel(&s.left_dets, Camera::Right);
        let swapped = verify_pair(&sl, &sr, &s.right, &s.left, &geom.transposed(), &cfg).unwrap();
        let a: Vec<_> = m.pairs.iter().map(|p| (p.left, p.right.unwrap())).collect();
        let b: Vec<_> = swapped.pairs.iter().map(|p| (p.left, p.right.unwrap())).collect();
        assert_eq!(pair_set(&s.left_dets, &s.right_dets, &a), pair_set(&sl, &sr, &b));
        assert!(!a.is_empty());
    }
}

#[test]
fn raising_threshold_never_adds_verified_detections() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let geom = rectified(320, 200);
    for _ in 0..20 {
        let s = scene(&mut rng, 3, 8);
        let mut previous: Option<BTreeSet<(Camera, BoundingBox)>> = None;
        for theta in [0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99] {
            let cfg = VerificationConfig {
                theta_ncc: theta,
                ..Default::default()
            };
            let out = verify_stereo(&s.left_dets, &s.right_dets, &s.left, &s.right, &geom, &cfg).unwrap();
            let set: BTreeSet<_> = out
                .verified
                .left
                .iter()
                .chain(&out.verified.right)
                .map(|v| (v.detection.camera, v.detection.bbox))
                .collect();
            assert!(set.len() <= s.left_dets.len() + s.right_dets.len());
            if let Some(prev) = &previous {
                assert!(set.is_subset(prev), "theta {theta}");
            }
            let mut seen = BTreeSet::new();
            for p in &out.matches.pairs {
                assert!(p.accepted && p.peak >= theta);
                assert!(seen.insert((0, p.left)) && seen.insert((1, p.right.unwrap())));
            }
            previous = Some(set);
        }
    }
}

/// Best one-to-one assignment over admissible pairs: most pairs, then the
/// highest total score.
fn exhaustive(scores: &[Vec<Option<f64>>], theta: f64) -> BTreeSet<(usize, usize)> {
    let (n, m) = (scores.len(), scores[0].len());
    let mut best = (0usize, f64::NEG_INFINITY, BTreeSet::new());
    // each left index picks a right index or none (encoded as m)
    let total = (m + 1).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut used = vec![false; m];
        let mut set = BTreeSet::new();
        let mut sum = 0.0;
        let mut ok = true;
        for i in 0..n {
            let j = c % (m + 1);
            c /= m + 1;
            if j == m {
                continue;
            }
            match scores[i][j] {
                Some(s) if s >= theta && !used[j] => {
                    used[j] = true;
                    sum += s;
                    set.insert((i, j));
                }
                _ => ok = false,
            }
        }
        if ok && (set.len() > best.0 || (set.len() == best.0 && sum > best.1)) {
            best = (set.len(), sum, set);
        }
    }
    best.2
}

#[test]
fn greedy_matches_exhaustive_on_two_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let geom = rectified(320, 200);
    let cfg = VerificationConfig {
        theta_ncc: 0.5,
        ..Default::default()
    };
    for _ in 0..100 {
        // two objects on nearly the same row so each passes both gates
        let mut s = scene(&mut rng, 0, 0);
        let y = rng.gen_range(40..150);
        for slot in 0..2u32 {
            let (ow, oh) = (12, 10);
            let x = 60 + slot * rng.gen_range(36..46) + rng.gen_range(0..10);
            let yy = y + rng.gen_range(0..3);
            let disp = rng.gen_range(5..15);
            let pattern = random_image(&mut rng, ow, oh, 255);
            for (px, py, p) in pattern.enumerate_pixels() {
                s.left.put_pixel(x + px, yy + py, *p);
                s.right.put_pixel(x - disp + px, yy + py, *p);
            }
            s.left_dets.push(det(BoundingBox::new(x, yy, ow, oh), Camera::Left));
            s.right_dets.push(det(BoundingBox::new(x - disp, yy, ow, oh), Camera::Right));
        }
        let scores = pair_scores(&s.left_dets, &s.right_dets, &s.left, &s.right, &geom, &cfg);
        let plain: Vec<Vec<Option<f64>>> =
            scores.scores.iter().map(|r| r.iter().map(|p| p.map(|p| p.value)).collect()).collect();
        let m = verify_pair(&s.left_dets, &s.right_dets, &s.left, &s.right, &geom, &cfg).unwrap();
        let greedy: BTreeSet<_> = m.pairs.iter().map(|p| (p.left, p.right.unwrap())).collect();
        assert_eq!(greedy, exhaustive(&plain, cfg.theta_ncc));
        assert_eq!(greedy.len(), 2);
    }
}

#[test]
fn one_view_phantoms_are_discarded() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let geom = rectified(320, 200);
    let cfg = VerificationConfig::default();
    let (mut kept, mut total) = (0, 0);
    for _ in 0..100 {
        let s = scene(&mut rng, 0, 5);
        let out = verify_stereo(&s.left_dets, &s.right_dets, &s.left, &s.right, &geom, &cfg).unwrap();
        kept += out.verified.len();
        total += s.left_dets.len() + s.right_dets.len();
    }
    assert!(kept as f64 <= 0.1 * total as f64, "{kept} of {total} kept");
}
