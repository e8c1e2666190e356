use std::collections::VecDeque;

use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seahorizon::detection::{
    extract_obstacle_map, label_components, suppress_detections, water_edge, water_mask, BoundingBox, Camera,
    Detection, WaterMask, ENCLOSURE_RATIO,
};

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Breadth-first flood fill; components listed in raster order of their seed.
fn flood_components(fg: &[bool], w: usize, h: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; fg.len()];
    let mut out = Vec::new();
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if fg[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> Vec<bool> {
    (0..w * h).map(|_| rng.gen_bool(p)).collect()
}

#[test]
fn labeling_matches_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let p = rng.gen_range(0.1..0.9);
        let fg = random_mask(&mut rng, w, h, p);
        let (labels, n) = label_components(&fg, w, h);
        let comps = flood_components(&fg, w, h);
        assert_eq!(n, comps.len());
        for (k, comp) in comps.iter().enumerate() {
            for &i in comp {
                assert_eq!(labels[i] as usize, k + 1);
            }
        }
        for (i, &f) in fg.iter().enumerate() {
            assert_eq!(f, labels[i] != 0);
        }
    }
}

/// Blob list by the definitions alone: largest water component, dry
/// components, their distinct water neighbors, centroid below the edge.
fn oracle_blobs(mask: &[bool], w: usize, h: usize) -> Vec<(BoundingBox, usize)> {
    let water = flood_components(mask, w, h);
    let Some(region) = water.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    }) else {
        return Vec::new();
    };
    let mut in_region = vec![false; w * h];
    for &i in region {
        in_region[i] = true;
    }
    let edge: Vec<Option<usize>> = (0..w).map(|x| (0..h).find(|&y| in_region[y * w + x])).collect();
    let dry: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let mut out = Vec::new();
    for comp in flood_components(&dry, w, h) {
        let mut member = vec![false; w * h];
        for &i in &comp {
            member[i] = true;
        }
        let mut boundary = std::collections::BTreeSet::new();
        for &i in &comp {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                    let j = ny as usize * w + nx as usize;
                    if !member[j] {
                        boundary.insert(j);
                    }
                }
            }
        }
        if boundary.is_empty() {
            continue;
        }
        let ratio = boundary.iter().filter(|&&j| in_region[j]).count() as f64 / boundary.len() as f64;
        let cx = comp.iter().map(|&i| (i % w) as f64).sum::<f64>() / comp.len() as f64;
        let cy = comp.iter().map(|&i| (i / w) as f64).sum::<f64>() / comp.len() as f64;
        let col = (cx.round() as usize).min(w - 1);
        if ratio >= ENCLOSURE_RATIO && edge[col].is_some_and(|e| cy > e as f64) {
            let xs = comp.iter().map(|&i| i % w);
            let ys = comp.iter().map(|&i| i / w);
            let (x0, x1) = (xs.clone().min().unwrap(), xs.max().unwrap());
            let (y0, y1) = (ys.clone().min().unwrap(), ys.max().unwrap());
            out.push((
                BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32),
                comp.len(),
            ));
        }
    }
    out
}

fn to_mask(fg: &[bool], w: usize, h: usize) -> WaterMask {
    WaterMask::new(w, h, fg.iter().map(|&b| u8::from(b)).collect()).unwrap()
}

#[test]
fn blobs_match_flood_fill_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let (w, h) = (rng.gen_range(2..30), rng.gen_range(2..30));
        // mostly water with scattered land so some blobs pass the enclosure test
        let p = rng.gen_range(0.55..0.95);
        let fg = random_mask(&mut rng, w, h, p);
        let map = extract_obstacle_map(&to_mask(&fg, w, h));
        let got: Vec<(BoundingBox, usize)> = map.blobs.iter().map(|b| (b.bbox, b.area)).collect();
        assert_eq!(got, oracle_blobs(&fg, w, h));
    }
}

#[test]
fn water_mask_matches_argmax_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = 64;
        let rows: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                // coarse values so ties occur
                let r: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0..4) as f64);
                let s: f64 = r.iter().sum::<f64>().max(1.0);
                r.map(|v| v / s)
            })
            .collect();
        let m = water_mask(&rows, 8, 8).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let mut water = true;
            for k in [0, 1, 3] {
                if r[k] >= r[2] {
                    water = false;
                }
            }
            assert_eq!(m.data[i] == 1, water);
        }
    }
}

#[test]
fn coastline_edge_matches_column_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let (w, h) = (60, 40);
        // random walk coastline, water below it
        let mut row = rng.gen_range(5..35) as isize;
        let mut coast = Vec::new();
        for _ in 0..w {
            row = (row + rng.gen_range(-2..=2)).clamp(1, h as isize - 1);
            coast.push(row as usize);
        }
        let fg: Vec<bool> = (0..w * h).map(|i| i / w >= coast[i % w]).collect();
        let map = extract_obstacle_map(&to_mask(&fg, w, h));
        let edge = water_edge(&map);
        for x in 0..w {
            let scan = (0..h).find(|&y| map.region[y * w + x]).map(|y| y as u32);
            assert_eq!(edge.rows[x], scan);
            assert_eq!(edge.rows[x], Some(coast[x] as u32));
        }
    }
}

fn det(b: BoundingBox, area: usize) -> Detection {
    Detection {
        bbox: b,
        area,
        camera: Camera::Left,
    }
}

/// Merge any close pair until none is left, in the most naive way.
fn naive_merge(dets: &[Detection], min_area: usize, merge_dist: f64) -> Vec<(BoundingBox, usize)> {
    let mut items: Vec<(BoundingBox, usize)> = dets
        .iter()
        .filter(|d| d.area >= min_area)
        .map(|d| (d.bbox, d.area))
        .collect();
    'outer: loop {
        for i in 0..items.len() {
            for j in 0..items.len() {
                if i != j && items[i].0.gap(&items[j].0) <= merge_dist {
                    let b = items.remove(j.max(i));
                    let a = items.remove(j.min(i));
                    items.push((a.0.union(&b.0), a.1 + b.1));
                    continue 'outer;
                }
            }
        }
        break;
    }
    items.sort();
    items
}

fn random_dets(rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let n = rng.gen_range(0..12);
    (0..n)
        .map(|_| {
            let b = BoundingBox::new(rng.gen_range(0..200), rng.gen_range(0..200), rng.gen_range(1..30), rng.gen_range(1..30));
            det(b, rng.gen_range(1..(b.area() as usize + 1)))
        })
        .collect()
}

#[test]
fn merging_matches_naive_fixpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..300 {
        let dets = random_dets(&mut rng);
        let mut got: Vec<(BoundingBox, usize)> = suppress_detections(&dets, 25, 10.0).iter().map(|d| (d.bbox, d.area)).collect();
        got.sort();
        assert_eq!(got, naive_merge(&dets, 25, 10.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn suppression_is_idempotent(seed in 0u64..u64::MAX, min_area in 1usize..60, dist in 0.0f64..25.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dets = random_dets(&mut rng);
        let once = suppress_detections(&dets, min_area, dist);
        let twice = suppress_detections(&once, min_area, dist);
        prop_assert_eq!(&once, &twice);
        for w in once.windows(2) {
            prop_assert!(w[0].area >= w[1].area);
        }
    }

    #[test]
    fn pixels_partition(seed in 0u64..u64::MAX) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.gen_range(2..25), rng.gen_range(2..25));
        let fg = random_mask(&mut rng, w, h, 0.7);
        let map = extract_obstacle_map(&to_mask(&fg, w, h));
        let (labels, _) = label_components(&fg.iter().map(|&b| !b).collect::<Vec<_>>(), w, h);
        let mut blob_label = vec![false; labels.len() + 1];
        for b in &map.blobs {
            // every blob is one dry component; find it through its bbox corner row
            let i = (0..w * h).find(|&i| labels[i] != 0 && {
                let (x, y) = ((i % w) as u32, (i / w) as u32);
                x >= b.bbox.u && x < b.bbox.right() && y == b.bbox.v
            }).unwrap();
            blob_label[labels[i] as usize] = true;
        }
        for i in 0..w * h {
            let in_blob = labels[i] != 0 && blob_label[labels[i] as usize];
            let classes = [map.region[i], in_blob].iter().filter(|&&c| c).count();
            prop_assert!(classes <= 1);
            if map.region[i] {
                prop_assert!(fg[i]);
            }
        }
    }

    /// Growing the main region never lowers the edge.
    #[test]
    fn growing_region_never_lowers_edge(seed in 0u64..u64::MAX) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.gen_range(2..30), rng.gen_range(2..30));
        let fg = random_mask(&mut rng, w, h, 0.6);
        let before = extract_obstacle_map(&to_mask(&fg, w, h));
        let mut grown = fg.clone();
        for i in 0..w * h {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let touches = NEIGHBORS.iter().any(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize && before.region[ny as usize * w + nx as usize]
            });
            if touches && rng.gen_bool(0.5) {
                grown[i] = true;
            }
        }
        let after = extract_obstacle_map(&to_mask(&grown, w, h));
        let (e0, e1) = (water_edge(&before), water_edge(&after));
        for x in 0..w {
            if let Some(r0) = e0.rows[x] {
                let r1 = e1.rows[x];
                prop_assert!(r1.is_some_and(|r1| r1 <= r0));
            }
        }
    }
}
