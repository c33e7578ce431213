use serde::{Deserialize, Serialize};

use crate::codec::{rgb_distance, unshrink_box, BBox, Image, Palette, DOT_RED};
use crate::eval::iou;

use super::{binarize, dbscan, feature_diff, Cluster, FeatureHook, PostprocError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub extractor_seed: u64,
    /// Keep pixels above `μ + threshold_sigmas·σ` of the difference map.
    pub threshold_sigmas: f64,
    pub eps: f64,
    pub min_pts: usize,
    /// Pixels closer than this to pure red are dot pixels and do not vote.
    pub red_guard: f64,
    /// A pixel votes for its nearest palette color only if closer than this.
    pub max_color_distance: f64,
    pub min_score: f64,
    pub min_area: usize,
    /// Replace the cluster box by the tight extent of the winning color's
    /// connected region around it.
    pub refine_boxes: bool,
    /// How far beyond the cluster box that region may extend, in pixels.
    pub refine_margin: usize,
    /// Emit one detection per connected color region of a cluster instead of
    /// one per cluster (requires `refine_boxes`).
    pub split_colors: bool,
    /// Require dot pixels near the center of each accepted box.
    pub verify_center: bool,
    /// Greedy same-class suppression above this IoU; `None` disables it.
    pub nms_iou: Option<f64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            extractor_seed: 0,
            threshold_sigmas: 2.0,
            eps: 3.0,
            min_pts: 8,
            red_guard: 100.0,
            max_color_distance: 80.0,
            min_score: 0.3,
            min_area: 9,
            refine_boxes: true,
            refine_margin: 8,
            split_colors: true,
            verify_center: false,
            nms_iou: None,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<(), PostprocError> {
        let ok = self.eps > 0.0
            && self.min_pts >= 1
            && self.threshold_sigmas.is_finite()
            && self.red_guard >= 0.0
            && self.max_color_distance > 0.0
            && (0.0..=1.0).contains(&self.min_score)
            && self.nms_iou.is_none_or(|t| (0.0..=1.0).contains(&t));
        if ok {
            Ok(())
        } else {
            Err(PostprocError::Config(format!(
                "invalid detection configuration {self:?}"
            )))
        }
    }
}

/// Outcome of color voting inside a cluster's box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterLabel {
    pub class_id: usize,
    pub score: f64,
    /// Pixel box `(x0, y0, x1, y1)`, end-exclusive, the label refers to.
    pub bbox: (usize, usize, usize, usize),
}

/// Votes the pixels of `y_hat` inside `bbox` into palette classes. Dot pixels
/// are skipped; the rest vote for their nearest color when close enough.
/// Returns the per-class vote counts and the number of eligible pixels.
fn vote(
    bbox: (usize, usize, usize, usize),
    y_hat: &Image,
    palette: &Palette,
    cfg: &DetectConfig,
) -> (Vec<usize>, usize, Vec<Option<usize>>) {
    let (x0, y0, x1, y1) = bbox;
    let mut votes = vec![0usize; palette.len()];
    let mut eligible = 0;
    let mut owner = Vec::with_capacity((x1 - x0) * (y1 - y0));
    for y in y0..y1 {
        for x in x0..x1 {
            let c = y_hat.get(x, y);
            if rgb_distance(c, DOT_RED) < cfg.red_guard {
                owner.push(None);
                continue;
            }
            eligible += 1;
            let (id, d) = palette.nearest(c);
            if d < cfg.max_color_distance {
                votes[id] += 1;
                owner.push(Some(id));
            } else {
                owner.push(None);
            }
        }
    }
    (votes, eligible, owner)
}

/// Majority color class of the cluster region; `None` when rejected.
///
/// The score is winning votes over eligible (non-dot) pixels of the region.
/// With `refine_boxes`, the region is first shrunk to the tight extent of the
/// winning class's pixels and re-scored.
pub fn classify_cluster(
    cluster: &Cluster,
    y_hat: &Image,
    palette: &Palette,
    cfg: &DetectConfig,
) -> Option<ClusterLabel> {
    if cluster.members.is_empty() || palette.is_empty() {
        return None;
    }
    let mut bbox = cluster.bbox();
    if bbox.2 > y_hat.width() || bbox.3 > y_hat.height() {
        return None;
    }
    let (votes, eligible, owner) = vote(bbox, y_hat, palette, cfg);
    let class_id = argmax_lowest(&votes)?;
    if cfg.refine_boxes {
        bbox = refine(bbox, &owner, class_id, y_hat, palette, cfg);
    }
    if cfg.refine_boxes {
        return score_region(bbox, class_id, y_hat, palette, cfg);
    }
    let area = (bbox.2 - bbox.0) * (bbox.3 - bbox.1);
    if eligible == 0 || area < cfg.min_area {
        return None;
    }
    let score = votes[class_id] as f64 / eligible as f64;
    (score >= cfg.min_score).then_some(ClusterLabel {
        class_id,
        score,
        bbox,
    })
}

/// Flood-fill over one class's pixels, passing through dot pixels, confined to a window.
struct Flood<'a> {
    y_hat: &'a Image,
    palette: &'a Palette,
    cfg: &'a DetectConfig,
    lim: (usize, usize, usize, usize),
}

impl<'a> Flood<'a> {
    fn new(
        bbox: (usize, usize, usize, usize),
        y_hat: &'a Image,
        palette: &'a Palette,
        cfg: &'a DetectConfig,
    ) -> Self {
        let m = cfg.refine_margin;
        let lim = (
            bbox.0.saturating_sub(m),
            bbox.1.saturating_sub(m),
            (bbox.2 + m).min(y_hat.width()),
            (bbox.3 + m).min(y_hat.height()),
        );
        Self {
            y_hat,
            palette,
            cfg,
            lim,
        }
    }

    fn index(&self, x: usize, y: usize) -> usize {
        (y - self.lim.1) * (self.lim.2 - self.lim.0) + (x - self.lim.0)
    }

    fn len(&self) -> usize {
        (self.lim.2 - self.lim.0) * (self.lim.3 - self.lim.1)
    }

    /// 0 = other, 1 = pixel of `class`, 2 = dot pixel.
    fn kind(&self, x: usize, y: usize, class: usize) -> u8 {
        let c = self.y_hat.get(x, y);
        if rgb_distance(c, DOT_RED) < self.cfg.red_guard {
            return 2;
        }
        let (id, d) = self.palette.nearest(c);
        u8::from(id == class && d < self.cfg.max_color_distance)
    }

    /// Tight extent of the class pixels reachable from `seeds`; marks `seen`.
    fn extent(
        &self,
        seeds: &[(usize, usize)],
        class: usize,
        seen: &mut [bool],
    ) -> (usize, usize, usize, usize) {
        let mut stack = Vec::new();
        for &(x, y) in seeds {
            let i = self.index(x, y);
            if !seen[i] {
                seen[i] = true;
                stack.push((x, y));
            }
        }
        let lim = self.lim;
        let mut tight = (usize::MAX, usize::MAX, 0, 0);
        while let Some((x, y)) = stack.pop() {
            if self.kind(x, y, class) == 1 {
                tight = (
                    tight.0.min(x),
                    tight.1.min(y),
                    tight.2.max(x + 1),
                    tight.3.max(y + 1),
                );
            }
            for (nx, ny) in [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ] {
                if nx < lim.0 || nx >= lim.2 || ny < lim.1 || ny >= lim.3 {
                    continue;
                }
                let i = self.index(nx, ny);
                if !seen[i] && self.kind(nx, ny, class) != 0 {
                    seen[i] = true;
                    stack.push((nx, ny));
                }
            }
        }
        tight
    }
}

fn seeds_of(
    bbox: (usize, usize, usize, usize),
    owner: &[Option<usize>],
    class: usize,
) -> Vec<(usize, usize)> {
    let bw = bbox.2 - bbox.0;
    owner
        .iter()
        .enumerate()
        .filter(|(_, o)| **o == Some(class))
        .map(|(i, _)| (bbox.0 + i % bw, bbox.1 + i / bw))
        .collect()
}

/// Tight extent of the winning color's connected region, seeded from its
/// pixels inside `bbox` and confined to `refine_margin` around it.
fn refine(
    bbox: (usize, usize, usize, usize),
    owner: &[Option<usize>],
    class_id: usize,
    y_hat: &Image,
    palette: &Palette,
    cfg: &DetectConfig,
) -> (usize, usize, usize, usize) {
    let flood = Flood::new(bbox, y_hat, palette, cfg);
    let mut seen = vec![false; flood.len()];
    flood.extent(&seeds_of(bbox, owner, class_id), class_id, &mut seen)
}

fn score_region(
    bbox: (usize, usize, usize, usize),
    class_id: usize,
    y_hat: &Image,
    palette: &Palette,
    cfg: &DetectConfig,
) -> Option<ClusterLabel> {
    let (votes, eligible, _) = vote(bbox, y_hat, palette, cfg);
    let area = (bbox.2 - bbox.0) * (bbox.3 - bbox.1);
    if eligible == 0 || area < cfg.min_area {
        return None;
    }
    let score = votes[class_id] as f64 / eligible as f64;
    (score >= cfg.min_score).then_some(ClusterLabel {
        class_id,
        score,
        bbox,
    })
}

/// Splits a cluster into connected single-color regions: every palette-colored
/// pixel inside the cluster box seeds a flood over its class, and each
/// resulting region is scored like [`classify_cluster`] scores a refined box.
/// Regions are ordered by class, then by first seed in row-major order.
pub fn split_cluster(
    cluster: &Cluster,
    y_hat: &Image,
    palette: &Palette,
    cfg: &DetectConfig,
) -> Vec<ClusterLabel> {
    if cluster.members.is_empty() || palette.is_empty() {
        return Vec::new();
    }
    let bbox = cluster.bbox();
    if bbox.2 > y_hat.width() || bbox.3 > y_hat.height() {
        return Vec::new();
    }
    let (votes, _, owner) = vote(bbox, y_hat, palette, cfg);
    let flood = Flood::new(bbox, y_hat, palette, cfg);
    let mut out = Vec::new();
    for (class_id, &v) in votes.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let mut seen = vec![false; flood.len()];
        for seed in seeds_of(bbox, &owner, class_id) {
            if seen[flood.index(seed.0, seed.1)] {
                continue;
            }
            let region = flood.extent(&[seed], class_id, &mut seen);
            out.extend(score_region(region, class_id, y_hat, palette, cfg));
        }
    }
    out
}

/// Index of the largest positive count; ties go to the lower index.
fn argmax_lowest(votes: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in votes.iter().enumerate() {
        if v > 0 && best.is_none_or(|b| v > votes[b]) {
            best = Some(i);
        }
    }
    best
}

fn has_center_dot(bbox: (usize, usize, usize, usize), y_hat: &Image, cfg: &DetectConfig) -> bool {
    let (cx, cy) = ((bbox.0 + bbox.2) / 2, (bbox.1 + bbox.3) / 2);
    let r = 3usize;
    (cy.saturating_sub(r)..(cy + r + 1).min(y_hat.height())).any(|y| {
        (cx.saturating_sub(r)..(cx + r + 1).min(y_hat.width()))
            .any(|x| rgb_distance(y_hat.get(x, y), DOT_RED) < cfg.red_guard)
    })
}

/// Detections decoded from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub image_id: u64,
    pub detections: Vec<BBox>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    class: usize,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionSetRecord {
    image_id: u64,
    detections: Vec<DetectionRecord>,
}

impl DetectionSet {
    fn to_record(&self) -> DetectionSetRecord {
        DetectionSetRecord {
            image_id: self.image_id,
            detections: self
                .detections
                .iter()
                .map(|b| DetectionRecord {
                    class: b.class_id,
                    cx: b.cx,
                    cy: b.cy,
                    w: b.w,
                    h: b.h,
                    score: b.score,
                })
                .collect(),
        }
    }

    fn from_record(rec: DetectionSetRecord) -> Result<Self, PostprocError> {
        let detections = rec
            .detections
            .into_iter()
            .map(|d| BBox::new(d.class, d.cx, d.cy, d.w, d.h).with_score(d.score))
            .collect::<Vec<_>>();
        if let Some(b) = detections.iter().find(|b| !b.is_valid()) {
            return Err(PostprocError::Json(format!(
                "invalid detection {b:?} in image {}",
                rec.image_id
            )));
        }
        Ok(Self {
            image_id: rec.image_id,
            detections,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("detections serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, PostprocError> {
        let rec: DetectionSetRecord =
            serde_json::from_str(s).map_err(|e| PostprocError::Json(e.to_string()))?;
        Self::from_record(rec)
    }

    /// A results file: a JSON array of per-image records.
    pub fn list_to_json(sets: &[DetectionSet]) -> String {
        let recs: Vec<DetectionSetRecord> = sets.iter().map(Self::to_record).collect();
        serde_json::to_string_pretty(&recs).expect("detections serialize")
    }

    pub fn list_from_json(s: &str) -> Result<Vec<DetectionSet>, PostprocError> {
        let recs: Vec<DetectionSetRecord> =
            serde_json::from_str(s).map_err(|e| PostprocError::Json(e.to_string()))?;
        recs.into_iter().map(Self::from_record).collect()
    }
}

/// Greedy per-class suppression: keep the highest score, drop same-class boxes above `thr` IoU.
pub fn nms(mut boxes: Vec<BBox>, thr: f64) -> Vec<BBox> {
    boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<BBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        if !kept
            .iter()
            .any(|k| k.class_id == b.class_id && iou(k, &b) > thr)
        {
            kept.push(b);
        }
    }
    kept
}

/// Full decode of a generated annotation image `y_hat` for input `x`.
pub fn detect<F: FeatureHook + ?Sized>(
    image_id: u64,
    x: &Image,
    y_hat: &Image,
    fx: &F,
    palette: &Palette,
    shrink_ratio: f64,
    cfg: &DetectConfig,
) -> Result<DetectionSet, PostprocError> {
    cfg.validate()?;
    if !(shrink_ratio > 0.0 && shrink_ratio <= 1.0) {
        return Err(PostprocError::Config(format!(
            "shrink ratio {shrink_ratio} outside (0, 1]"
        )));
    }
    let diff = feature_diff(x, y_hat, fx)?;
    let points = binarize(&diff, cfg.threshold_sigmas);
    let (w, h) = (x.width() as f64, x.height() as f64);
    let mut detections = Vec::new();
    let mut labels = Vec::new();
    for cluster in dbscan(&points, cfg.eps, cfg.min_pts) {
        if cfg.refine_boxes && cfg.split_colors {
            labels.extend(split_cluster(&cluster, y_hat, palette, cfg));
        } else {
            labels.extend(classify_cluster(&cluster, y_hat, palette, cfg));
        }
    }
    // Regions reached from two clusters are reported once.
    let mut unique: Vec<ClusterLabel> = Vec::with_capacity(labels.len());
    for l in labels {
        if !unique
            .iter()
            .any(|u| u.class_id == l.class_id && u.bbox == l.bbox)
        {
            unique.push(l);
        }
    }
    for label in unique {
        if cfg.verify_center && !has_center_dot(label.bbox, y_hat, cfg) {
            continue;
        }
        let (x0, y0, x1, y1) = label.bbox;
        let shrunk = BBox::from_corners(
            label.class_id,
            x0 as f64 / w,
            y0 as f64 / h,
            x1 as f64 / w,
            y1 as f64 / h,
        );
        detections.push(unshrink_box(shrunk, shrink_ratio).with_score(label.score));
    }
    if let Some(thr) = cfg.nms_iou {
        detections = nms(detections, thr);
    }
    Ok(DetectionSet {
        image_id,
        detections,
    })
}
