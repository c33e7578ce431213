//! Detection metrics: IoU, greedy matching, COCO-style AP and log-average miss rate.

mod metrics;

pub use metrics::{
    average_precision, class_average_precision, coco_metrics, iou, log_avg_miss_rate,
    match_detections, GroundTruth, MatchResult, MatchedDetection, MetricsReport, AREA_LARGE,
    AREA_SMALL, RECALL_POINTS,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no ground-truth boxes to evaluate against")]
    NoGroundTruth,
    #[error("detections for image {0} have no ground-truth entry")]
    UnknownImage(u64),
}
