use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::codec::BBox;
use crate::postproc::DetectionSet;

use super::EvalError;

/// Ground truth of one image, with its pixel size for area buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: u64,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BBox>,
}

pub const RECALL_POINTS: usize = 101;
/// Pixel-area bucket edges: small `< 32²`, large `> 96²`.
pub const AREA_SMALL: f64 = 32.0 * 32.0;
pub const AREA_LARGE: f64 = 96.0 * 96.0;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x1().min(b.x1()) - a.x0().max(b.x0())).max(0.0);
    let ih = (a.y1().min(b.y1()) - a.y0().max(b.y0())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedDetection {
    pub image_id: u64,
    pub score: f64,
    pub matched: bool,
    /// IoU with the matched ground truth, or the best IoU seen when unmatched.
    pub iou: f64,
    /// Excluded from the precision-recall curve (area bucket semantics).
    pub ignored: bool,
}

/// Greedy matching outcome for one class at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// In evaluation order: score descending, ties by image id then input order.
    pub detections: Vec<MatchedDetection>,
    /// Non-ignored ground truths per image.
    pub gt_counts: HashMap<u64, usize>,
}

impl MatchResult {
    pub fn num_positives(&self) -> usize {
        self.gt_counts.values().sum()
    }
}

fn pixel_area(b: &BBox, g: &GroundTruth) -> f64 {
    b.area() * (g.width * g.height) as f64
}

/// Matches `class` detections to ground truths. With an `area_range`, ground
/// truths outside it are ignored, detections matched to them are ignored, and
/// unmatched detections outside it are ignored.
pub fn match_detections(
    dets: &[DetectionSet],
    gts: &[GroundTruth],
    class: usize,
    thr: f64,
    area_range: Option<(f64, f64)>,
) -> Result<MatchResult, EvalError> {
    let by_id: HashMap<u64, &GroundTruth> = gts.iter().map(|g| (g.image_id, g)).collect();
    let in_range = |a: f64| area_range.is_none_or(|(lo, hi)| a >= lo && a <= hi);

    let mut order: Vec<(u64, usize, &BBox)> = Vec::new();
    for set in dets {
        if !by_id.contains_key(&set.image_id) {
            return Err(EvalError::UnknownImage(set.image_id));
        }
        for (i, b) in set
            .detections
            .iter()
            .enumerate()
            .filter(|(_, b)| b.class_id == class)
        {
            order.push((set.image_id, i, b));
        }
    }
    order.sort_by(|a, b| {
        b.2.score
            .total_cmp(&a.2.score)
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let mut gt_boxes: HashMap<u64, Vec<(&BBox, bool)>> = HashMap::new();
    let mut gt_counts = HashMap::new();
    for g in gts {
        let boxes: Vec<(&BBox, bool)> = g
            .boxes
            .iter()
            .filter(|b| b.class_id == class)
            .map(|b| (b, !in_range(pixel_area(b, g))))
            .collect();
        gt_counts.insert(g.image_id, boxes.iter().filter(|(_, ign)| !ign).count());
        gt_boxes.insert(g.image_id, boxes);
    }
    let mut used: HashMap<u64, Vec<bool>> = gt_boxes
        .iter()
        .map(|(&id, v)| (id, vec![false; v.len()]))
        .collect();

    let mut out = Vec::with_capacity(order.len());
    for (image_id, _, det) in order {
        let cands = &gt_boxes[&image_id];
        let taken = used.get_mut(&image_id).expect("every image has a slot");
        let mut best: Option<(usize, f64, bool)> = None;
        let mut best_seen = 0.0f64;
        for (j, &(g, ignored)) in cands.iter().enumerate() {
            let v = iou(det, g);
            best_seen = best_seen.max(v);
            if taken[j] || v < thr {
                continue;
            }
            // Prefer real over ignored ground truths, then higher IoU, then lower index.
            let better = match best {
                None => true,
                Some((_, bv, bign)) => (bign && !ignored) || (bign == ignored && v > bv),
            };
            if better {
                best = Some((j, v, ignored));
            }
        }
        let g = by_id[&image_id];
        let rec = match best {
            Some((j, v, ignored)) => {
                taken[j] = true;
                MatchedDetection {
                    image_id,
                    score: det.score,
                    matched: true,
                    iou: v,
                    ignored,
                }
            }
            None => MatchedDetection {
                image_id,
                score: det.score,
                matched: false,
                iou: best_seen,
                ignored: !in_range(pixel_area(det, g)),
            },
        };
        out.push(rec);
    }
    Ok(MatchResult {
        detections: out,
        gt_counts,
    })
}

/// 101-point interpolated AP of a match result; `None` without positives.
fn ap_from_matches(m: &MatchResult) -> Option<f64> {
    let npos = m.num_positives();
    if npos == 0 {
        return None;
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for d in m.detections.iter().filter(|d| !d.ignored) {
        if d.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / npos as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < r - 1e-12);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some(sum / RECALL_POINTS as f64)
}

/// AP of one class; `None` when the class has no ground truth.
pub fn class_average_precision(
    dets: &[DetectionSet],
    gts: &[GroundTruth],
    class: usize,
    thr: f64,
) -> Result<Option<f64>, EvalError> {
    Ok(ap_from_matches(&match_detections(
        dets, gts, class, thr, None,
    )?))
}

fn gt_classes(gts: &[GroundTruth]) -> BTreeSet<usize> {
    gts.iter()
        .flat_map(|g| g.boxes.iter().map(|b| b.class_id))
        .collect()
}

fn mean_over_classes(
    dets: &[DetectionSet],
    gts: &[GroundTruth],
    thr: f64,
    area_range: Option<(f64, f64)>,
) -> Result<Option<f64>, EvalError> {
    let mut vals = Vec::new();
    for c in gt_classes(gts) {
        if let Some(ap) = ap_from_matches(&match_detections(dets, gts, c, thr, area_range)?) {
            vals.push(ap);
        }
    }
    Ok((!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64))
}

/// AP at one IoU threshold averaged over the classes present in `gts`.
pub fn average_precision(
    dets: &[DetectionSet],
    gts: &[GroundTruth],
    thr: f64,
) -> Result<f64, EvalError> {
    mean_over_classes(dets, gts, thr, None)?.ok_or(EvalError::NoGroundTruth)
}

/// Standard single-class log-average miss rate over FPPI in `[10⁻², 10⁰]`.
pub fn log_avg_miss_rate(
    dets: &[DetectionSet],
    gts: &[GroundTruth],
    class: usize,
) -> Result<f64, EvalError> {
    let m = match_detections(dets, gts, class, 0.5, None)?;
    let npos = m.num_positives();
    if npos == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let n_images = gts.len() as f64;
    // (fppi, miss rate) after each distinct score threshold, loosest last.
    let mut curve = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let ds = &m.detections;
    for (i, d) in ds.iter().enumerate() {
        if d.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        if i + 1 == ds.len() || ds[i + 1].score != d.score {
            curve.push((fp as f64 / n_images, 1.0 - tp as f64 / npos as f64));
        }
    }
    let mut acc = 0.0;
    const REFS: usize = 9;
    for k in 0..REFS {
        let r = 10f64.powf(-2.0 + 2.0 * k as f64 / (REFS - 1) as f64);
        let mr = curve
            .iter()
            .rev()
            .find(|&&(f, _)| f <= r)
            .map_or(1.0, |&(_, mr)| mr);
        acc += mr.max(1e-10).ln();
    }
    Ok((acc / REFS as f64).exp())
}

/// Summary row; size buckets without ground truth are `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "AP_s")]
    pub ap_s: f64,
    #[serde(rename = "AP_m")]
    pub ap_m: f64,
    #[serde(rename = "AP_l")]
    pub ap_l: f64,
    #[serde(rename = "recall@0.5")]
    pub recall50: f64,
    #[serde(rename = "mMR")]
    pub mmr: f64,
}

impl MetricsReport {
    pub fn table_header() -> &'static str {
        "   AP   AP50   AP75    APs    APm    APl  Recall    mMR"
    }

    /// Percentages with one decimal, `-` for undefined buckets.
    pub fn table_row(&self) -> String {
        let f = |v: f64| {
            if v < 0.0 {
                format!("{:>5}", "-")
            } else {
                format!("{:>5.1}", 100.0 * v)
            }
        };
        format!(
            "{}  {}  {}  {}  {}  {}   {}  {}",
            f(self.ap),
            f(self.ap50),
            f(self.ap75),
            f(self.ap_s),
            f(self.ap_m),
            f(self.ap_l),
            f(self.recall50),
            f(self.mmr)
        )
    }
}

pub fn coco_metrics(
    dets: &[DetectionSet],
    gts: &[GroundTruth],
) -> Result<MetricsReport, EvalError> {
    let classes = gt_classes(gts);
    if classes.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let mut sweep = Vec::new();
    for k in 0..10 {
        sweep.push(average_precision(dets, gts, 0.5 + 0.05 * k as f64)?);
    }
    let bucket = |lo: f64, hi: f64| -> Result<f64, EvalError> {
        let mut vals = Vec::new();
        for k in 0..10 {
            if let Some(v) = mean_over_classes(dets, gts, 0.5 + 0.05 * k as f64, Some((lo, hi)))? {
                vals.push(v);
            }
        }
        Ok(if vals.is_empty() {
            -1.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        })
    };
    let small = bucket(0.0, AREA_SMALL - 1e-9)?;
    let medium = bucket(AREA_SMALL, AREA_LARGE)?;
    let large = bucket(AREA_LARGE + 1e-9, f64::INFINITY)?;

    let (mut hit, mut total) = (0usize, 0usize);
    let mut mmr = 0.0;
    for &c in &classes {
        let m = match_detections(dets, gts, c, 0.5, None)?;
        hit += m.detections.iter().filter(|d| d.matched).count();
        total += m.num_positives();
        mmr += log_avg_miss_rate(dets, gts, c)?;
    }
    Ok(MetricsReport {
        ap: sweep.iter().sum::<f64>() / sweep.len() as f64,
        ap50: sweep[0],
        ap75: sweep[5],
        ap_s: small,
        ap_m: medium,
        ap_l: large,
        recall50: hit as f64 / total as f64,
        mmr: mmr / classes.len() as f64,
    })
}
