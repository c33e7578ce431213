//! End-to-end passes shared by the command line and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::codec::{
    pixel_extent, render_annotation, shrink_box, AnnotationStyle, BBox, CodecError, Image, Palette,
};
use crate::data::Dataset;
use crate::diffusion::{grad_map, DiffusionError, LatentCodec, PixelCodec};
use crate::eval::{coco_metrics, iou, EvalError, GroundTruth, MetricsReport};
use crate::postproc::{detect, DetectConfig, DetectionSet, FeatureHook, PostprocError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Postproc(#[from] PostprocError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("images differ in size: {0:?} vs {1:?}")]
    Dimensions((usize, usize), (usize, usize)),
}

pub fn ground_truths(data: &Dataset) -> Vec<GroundTruth> {
    data.samples
        .iter()
        .map(|s| GroundTruth {
            image_id: s.id,
            width: s.image.width(),
            height: s.image.height(),
            boxes: s.boxes.clone(),
        })
        .collect()
}

/// Detections whose best-overlapping ground truth (IoU ≥ 0.5) has another class.
pub fn cross_class_errors(dets: &[DetectionSet], gts: &[GroundTruth]) -> usize {
    let mut count = 0;
    for set in dets {
        let Some(g) = gts.iter().find(|g| g.image_id == set.image_id) else {
            continue;
        };
        for d in &set.detections {
            let best = g
                .boxes
                .iter()
                .map(|b| (iou(d, b), b.class_id))
                .max_by(|p, q| p.0.total_cmp(&q.0));
            if best.is_some_and(|(v, c)| v >= 0.5 && c != d.class_id) {
                count += 1;
            }
        }
    }
    count
}

/// Codec fidelity: metrics of decoding clean renders of the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub shrink_ratio: f64,
    pub images: usize,
    pub ground_truths: usize,
    pub detections: usize,
    pub cross_class_errors: usize,
    pub metrics: MetricsReport,
}

pub fn roundtrip<F: FeatureHook + ?Sized>(
    data: &Dataset,
    palette: &Palette,
    style: &AnnotationStyle,
    fx: &F,
    cfg: &DetectConfig,
) -> Result<(RoundtripReport, Vec<DetectionSet>), PipelineError> {
    let mut sets = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        let y = render_annotation(&s.image, &s.boxes, style, palette)?;
        sets.push(detect(
            s.id,
            &s.image,
            &y,
            fx,
            palette,
            style.shrink_ratio,
            cfg,
        )?);
    }
    let gts = ground_truths(data);
    let metrics = coco_metrics(&sets, &gts)?;
    let report = RoundtripReport {
        shrink_ratio: style.shrink_ratio,
        images: data.samples.len(),
        ground_truths: gts.iter().map(|g| g.boxes.len()).sum(),
        detections: sets.iter().map(|s| s.detections.len()).sum(),
        cross_class_errors: cross_class_errors(&sets, &gts),
        metrics,
    };
    Ok((report, sets))
}

/// Ground-truth boxes flattened with their image id, for diagnostics.
pub fn flatten(gts: &[GroundTruth]) -> Vec<(u64, BBox)> {
    gts.iter()
        .flat_map(|g| g.boxes.iter().map(move |b| (g.image_id, *b)))
        .collect()
}

/// Mean gradient map `G` of `y_hat` in codec space over the one-pixel outline
/// of every painted (shrunk) box; `None` without boxes.
pub fn boundary_sharpness(
    y_hat: &Image,
    boxes: &[BBox],
    style: &AnnotationStyle,
) -> Result<Option<f64>, PipelineError> {
    let (w, h) = (y_hat.width(), y_hat.height());
    let g = grad_map(&PixelCodec.encode(y_hat))?;
    let (mut sum, mut n) = (0.0f64, 0usize);
    for b in boxes {
        let (xs, ys) = pixel_extent(&shrink_box(*b, style.shrink_ratio), w, h);
        for y in ys.clone() {
            for x in xs.clone() {
                let edge = x == xs.start || x + 1 == xs.end || y == ys.start || y + 1 == ys.end;
                if edge {
                    sum += g.data()[y * w + x] as f64;
                    n += 1;
                }
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Peak signal-to-noise ratio in dB over 8-bit RGB; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, PipelineError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(PipelineError::Dimensions(
            (a.width(), a.height()),
            (b.width(), b.height()),
        ));
    }
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
        .sum::<f64>()
        / a.pixels().len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}
