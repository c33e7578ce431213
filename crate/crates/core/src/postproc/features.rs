use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::Image;
use crate::nn::{conv2d, Tensor};

use super::PostprocError;

/// Anything that maps an image to a list of feature maps `[1, C, H/s, W/s]`.
pub trait FeatureHook {
    fn features(&self, image: &Image) -> Result<Vec<Tensor>, PostprocError>;
}

/// Frozen three-stage conv pyramid (3×3 kernels), channels `[8, 16, 32]` at
/// cumulative strides `[1, 2, 4]`. Each stage applies random filters in `±w`
/// pairs followed by ReLU, so no input change is lost to rectification.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    stages: Vec<(Tensor, Tensor, usize)>,
}

pub const STAGE_CHANNELS: [usize; 3] = [8, 16, 32];
pub const STAGE_STRIDES: [usize; 3] = [1, 2, 4];

impl FeatureExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let mut prev_stride = 1;
        let stages = STAGE_CHANNELS
            .iter()
            .zip(STAGE_STRIDES)
            .map(|(&cout, stride)| {
                let std = (2.0 / (cin * 9) as f32).sqrt();
                let half = Tensor::randn(&[cout / 2, cin, 3, 3], std, &mut rng);
                let mut data = half.data().to_vec();
                data.extend(half.data().iter().map(|v| -v));
                let w = Tensor::from_vec(&[cout, cin, 3, 3], data).expect("paired filters");
                let step = stride / prev_stride;
                cin = cout;
                prev_stride = stride;
                (w, Tensor::zeros(&[cout]), step)
            })
            .collect();
        Self { stages }
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(0)
    }
}

impl FeatureHook for FeatureExtractor {
    fn features(&self, image: &Image) -> Result<Vec<Tensor>, PostprocError> {
        let (w, h) = (image.width(), image.height());
        let mut data = vec![0.0f32; 3 * w * h];
        for (i, px) in image.pixels().chunks(3).enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = px[c] as f32 / 255.0 - 0.5;
            }
        }
        let mut x = Tensor::from_vec(&[1, 3, h, w], data)?;
        let mut out = Vec::with_capacity(self.stages.len());
        for (weight, bias, stride) in &self.stages {
            x = conv2d(&x, weight, bias, *stride, 1)?.map(|v| v.max(0.0));
            out.push(x.clone());
        }
        Ok(out)
    }
}

/// Per-pixel non-negative difference map at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl DiffMap {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}

/// Sums, over feature stages, the channelwise L2 distance between the features
/// of `x` and `y_hat`, each stage upsampled (nearest) to the input resolution.
pub fn feature_diff<F: FeatureHook + ?Sized>(
    x: &Image,
    y_hat: &Image,
    fx: &F,
) -> Result<DiffMap, PostprocError> {
    if (x.width(), x.height()) != (y_hat.width(), y_hat.height()) {
        return Err(PostprocError::Dimensions(format!(
            "input is {}x{} but generated image is {}x{}",
            x.width(),
            x.height(),
            y_hat.width(),
            y_hat.height()
        )));
    }
    let (w, h) = (x.width(), x.height());
    let (fa, fb) = (fx.features(x)?, fx.features(y_hat)?);
    let mut values = vec![0.0f32; w * h];
    for (a, b) in fa.iter().zip(&fb) {
        let (_, c, sh, sw) = a.dims4()?;
        a.ensure_same_shape(b, "feature stage")?;
        let plane = sh * sw;
        let mut dist = vec![0.0f32; plane];
        for ch in 0..c {
            let (pa, pb) = (
                &a.data()[ch * plane..(ch + 1) * plane],
                &b.data()[ch * plane..(ch + 1) * plane],
            );
            for ((d, &u), &v) in dist.iter_mut().zip(pa).zip(pb) {
                *d += (u - v) * (u - v);
            }
        }
        for y in 0..h {
            let sy = (y * sh / h).min(sh - 1);
            for x in 0..w {
                let sx = (x * sw / w).min(sw - 1);
                values[y * w + x] += dist[sy * sw + sx].sqrt();
            }
        }
    }
    Ok(DiffMap {
        width: w,
        height: h,
        values,
    })
}

/// Pixels with `d > μ + k·σ`, row-major, as `(x, y)`.
pub fn binarize(d: &DiffMap, k_sigma: f64) -> Vec<(usize, usize)> {
    let n = d.values.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = d.values.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = d
        .values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let thr = mean + k_sigma * var.sqrt();
    (0..n)
        .filter(|&i| d.values[i] as f64 > thr)
        .map(|i| (i % d.width, i / d.width))
        .collect()
}
