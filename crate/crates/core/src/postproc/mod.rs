//! Decoding generated annotation images back into scored boxes: feature
//! differencing, thresholding, DBSCAN and palette voting.

mod dbscan;
mod detect;
mod features;

pub use dbscan::{dbscan, Cluster};
pub use detect::{
    classify_cluster, detect, nms, split_cluster, ClusterLabel, DetectConfig, DetectionSet,
};
pub use features::{
    binarize, feature_diff, DiffMap, FeatureExtractor, FeatureHook, STAGE_CHANNELS, STAGE_STRIDES,
};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum PostprocError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("detections json: {0}")]
    Json(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
