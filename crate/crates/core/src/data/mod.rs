//! Synthetic shapes scenes and dataset persistence (PPM images plus a JSON index).

mod dataset;
mod scene;

use std::path::PathBuf;

pub use dataset::{generate_dataset, read_dataset, write_dataset, Dataset, Sample, INDEX_FILE};
pub use scene::{
    generate_scene, scene_rng, shape_contains, SceneSpec, ShapeKind, GRAY_LIMIT, SHAPE_KINDS,
};

use crate::codec::CodecError;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed index: {0}")]
    Json(String),
    #[error("image {image_id}: index says {expected:?} but file is {found:?}")]
    DimensionMismatch {
        image_id: u64,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("image {image_id}: box out of range: {detail}")]
    BoxOutOfRange { image_id: u64, detail: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
