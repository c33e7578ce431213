//! The annotation codec: boxes ↔ painted annotation images.

mod bbox;
mod image;
mod palette;
mod render;

pub use bbox::{shrink_box, unshrink_box, BBox};
pub use image::{rgb_distance, Image, Rgb};
pub use palette::{
    hsv_to_rgb, make_palette, Palette, DOT_RED, MAX_CLASSES, MIN_PAIR_DISTANCE, MIN_RED_DISTANCE,
};
pub use render::{dot_pixels, pixel_extent, render_annotation, AnnotationStyle, AnnotationVariant};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("palette size {0} outside 1..=40")]
    PaletteSize(usize),
    #[error("class id {class_id} out of range for a {classes}-color palette")]
    ClassOutOfRange { class_id: usize, classes: usize },
    #[error("palette: {0}")]
    Palette(String),
    #[error("annotation style: {0}")]
    Style(String),
    #[error("ppm: {0}")]
    Ppm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
