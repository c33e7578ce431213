//! Brute-force reference implementations used to cross-check the library.
#![allow(dead_code)]

use paintdet::codec::BBox;

/// O(n²) DBSCAN: union-find over core points, components ordered by their
/// smallest core index, each border point assigned to the reachable component
/// with the smallest such index. Points are first sorted row-major.
pub fn dbscan_reference(
    points: &[(usize, usize)],
    eps: f64,
    min_pts: usize,
) -> Vec<Vec<(usize, usize)>> {
    let mut pts = points.to_vec();
    pts.sort_by_key(|&(x, y)| (y, x));
    let n = pts.len();
    let close = |a: (usize, usize), b: (usize, usize)| {
        let dx = a.0 as f64 - b.0 as f64;
        let dy = a.1 as f64 - b.1 as f64;
        (dx * dx + dy * dy).sqrt() <= eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| close(pts[i], pts[j])).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && close(pts[i], pts[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    // Root of each component is its smallest member index; rank components by it.
    let mut roots: Vec<usize> = (0..n)
        .filter(|&i| core[i])
        .map(|i| find(&mut parent, i))
        .collect();
    roots.sort_unstable();
    roots.dedup();
    let mut clusters = vec![Vec::new(); roots.len()];
    for i in 0..n {
        let comp = if core[i] {
            Some(find(&mut parent, i))
        } else {
            (0..n)
                .filter(|&j| core[j] && close(pts[i], pts[j]))
                .map(|j| find(&mut parent, j))
                .min()
        };
        if let Some(r) = comp {
            let k = roots.binary_search(&r).unwrap();
            clusters[k].push(pts[i]);
        }
    }
    clusters
}

pub fn iou_reference(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ax1, ay0, ay1) = (
        a.cx - a.w / 2.0,
        a.cx + a.w / 2.0,
        a.cy - a.h / 2.0,
        a.cy + a.h / 2.0,
    );
    let (bx0, bx1, by0, by1) = (
        b.cx - b.w / 2.0,
        b.cx + b.w / 2.0,
        b.cy - b.h / 2.0,
        b.cy + b.h / 2.0,
    );
    let w = ax1.min(bx1) - ax0.max(bx0);
    let h = ay1.min(by1) - ay0.max(by0);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Detections of one class as `(image_id, input index, box)` in evaluation order.
pub fn sorted_detections(dets: &[(u64, Vec<BBox>)], class: usize) -> Vec<(u64, BBox)> {
    let mut all: Vec<(u64, usize, BBox)> = Vec::new();
    for (img, boxes) in dets {
        for (i, b) in boxes.iter().enumerate() {
            if b.class_id == class {
                all.push((*img, i, *b));
            }
        }
    }
    all.sort_by(|a, b| {
        b.2.score
            .partial_cmp(&a.2.score)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    all.into_iter().map(|(i, _, b)| (i, b)).collect()
}

/// Number of true positives when greedily matching `dets` (in order).
pub fn greedy_true_positives(
    dets: &[(u64, BBox)],
    gts: &[(u64, Vec<BBox>)],
    class: usize,
    thr: f64,
) -> usize {
    let mut used: Vec<Vec<bool>> = gts.iter().map(|(_, b)| vec![false; b.len()]).collect();
    let mut tp = 0;
    for (img, d) in dets {
        let gi = gts.iter().position(|(g, _)| g == img).unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts[gi].1.iter().enumerate() {
            if g.class_id != class || used[gi][j] {
                continue;
            }
            let v = iou_reference(d, g);
            if v >= thr && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            used[gi][j] = true;
            tp += 1;
        }
    }
    tp
}

/// Exhaustive 101-point AP for one class: re-match every prefix of the ranked
/// detections and take the best precision at or beyond each recall level.
pub fn ap_reference(
    dets: &[(u64, Vec<BBox>)],
    gts: &[(u64, Vec<BBox>)],
    class: usize,
    thr: f64,
) -> Option<f64> {
    let npos: usize = gts
        .iter()
        .map(|(_, b)| b.iter().filter(|g| g.class_id == class).count())
        .sum();
    if npos == 0 {
        return None;
    }
    let ranked = sorted_detections(dets, class);
    let points: Vec<(f64, f64)> = (1..=ranked.len())
        .map(|k| {
            let tp = greedy_true_positives(&ranked[..k], gts, class, thr);
            (tp as f64 / npos as f64, tp as f64 / k as f64)
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        sum += points
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
    }
    Some(sum / 101.0)
}

/// Log-average miss rate by direct threshold enumeration.
pub fn mmr_reference(dets: &[(u64, Vec<BBox>)], gts: &[(u64, Vec<BBox>)], class: usize) -> f64 {
    let npos: usize = gts
        .iter()
        .map(|(_, b)| b.iter().filter(|g| g.class_id == class).count())
        .sum();
    let ranked = sorted_detections(dets, class);
    let mut thresholds: Vec<f64> = ranked.iter().map(|(_, b)| b.score).collect();
    thresholds.push(f64::INFINITY);
    // (fppi, miss rate) per threshold
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&s| {
            let kept: Vec<(u64, BBox)> = ranked
                .iter()
                .copied()
                .filter(|(_, b)| b.score >= s)
                .collect();
            let tp = greedy_true_positives(&kept, gts, class, 0.5);
            (
                (kept.len() - tp) as f64 / gts.len() as f64,
                1.0 - tp as f64 / npos as f64,
            )
        })
        .collect();
    let mut acc = 0.0;
    for k in 0..9 {
        let r = 10f64.powf(-2.0 + k as f64 / 4.0);
        let mr = curve
            .iter()
            .filter(|(f, _)| *f <= r)
            .map(|(_, m)| *m)
            .fold(f64::INFINITY, f64::min);
        acc += mr.max(1e-10).ln();
    }
    (acc / 9.0).exp()
}
