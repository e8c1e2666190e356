//! 8-connected component labeling on horizontal runs.

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let next = parent[x as usize];
        parent[x as usize] = parent[next as usize];
        x = next;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let (ra, rb) = (find(parent, a), find(parent, b));
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Maximal horizontal stretch `[start, end)` of foreground pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Run {
    pub start: u32,
    pub end: u32,
    pub label: u32,
}

impl Run {
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }
}

/// Labeled runs in raster order; row `y` owns `runs[rows[y]..rows[y + 1]]`.
#[derive(Debug, Clone)]
pub(crate) struct RunLabels {
    pub runs: Vec<Run>,
    pub rows: Vec<usize>,
    pub count: usize,
}

impl RunLabels {
    pub fn row(&self, y: usize) -> &[Run] {
        &self.runs[self.rows[y]..self.rows[y + 1]]
    }

    pub fn paint(&self, width: usize) -> Vec<u32> {
        let mut labels = vec![0u32; width * (self.rows.len() - 1)];
        for y in 0..self.rows.len() - 1 {
            for r in self.row(y) {
                labels[y * width + r.start as usize..y * width + r.end as usize].fill(r.label);
            }
        }
        labels
    }
}

/// Components numbered from 1 in raster order of their first pixel.
pub(crate) fn label_runs(width: usize, height: usize, fg: impl Fn(usize) -> bool) -> RunLabels {
    let mut runs: Vec<Run> = Vec::new();
    let mut rows = Vec::with_capacity(height + 1);
    let mut parent: Vec<u32> = vec![0];
    for y in 0..height {
        rows.push(runs.len());
        let prev = if y > 0 { rows[y - 1]..rows[y] } else { 0..0 };
        let mut j = prev.start;
        let base = y * width;
        let mut x = 0;
        while x < width {
            if !fg(base + x) {
                x += 1;
                continue;
            }
            let start = x;
            while x < width && fg(base + x) {
                x += 1;
            }
            let (a, b) = (start as u32, x as u32);
            let mut current = 0u32;
            // previous-row runs ending left of a - 1 cannot touch this or later runs
            while j < prev.end && runs[j].end < a {
                j += 1;
            }
            let mut k = j;
            while k < prev.end && runs[k].start <= b {
                let l = runs[k].label;
                current = if current == 0 { find(&mut parent, l) } else { union(&mut parent, current, l) };
                k += 1;
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            runs.push(Run {
                start: a,
                end: b,
                label: current,
            });
        }
    }
    rows.push(runs.len());
    // Provisional labels appear in raster order and roots are always the
    // smallest member, so compacting roots in increasing order keeps the
    // order of first appearance.
    let mut compact = vec![0u32; parent.len()];
    let mut count = 0u32;
    for l in 1..parent.len() as u32 {
        let r = find(&mut parent, l);
        if r == l {
            count += 1;
            compact[l as usize] = count;
        } else {
            compact[l as usize] = compact[r as usize];
        }
    }
    for r in runs.iter_mut() {
        r.label = compact[r.label as usize];
    }
    RunLabels {
        runs,
        rows,
        count: count as usize,
    }
}

/// Labels the 8-connected components of pixels where `fg` is true.
///
/// Returns per-pixel labels (0 = background, components numbered from 1 in
/// order of their first pixel in raster order) and the component count.
pub fn label_components(fg: &[bool], width: usize, height: usize) -> (Vec<u32>, usize) {
    assert_eq!(fg.len(), width * height);
    let runs = label_runs(width, height, |i| fg[i]);
    (runs.paint(width), runs.count)
}
