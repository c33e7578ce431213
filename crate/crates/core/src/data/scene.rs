use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{BBox, Image};
use crate::eval::iou;

use super::DataError;

/// Shape kinds; the index is the class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Ellipse,
    Cross,
}

pub const SHAPE_KINDS: [ShapeKind; 5] = [
    ShapeKind::Circle,
    ShapeKind::Square,
    ShapeKind::Triangle,
    ShapeKind::Ellipse,
    ShapeKind::Cross,
];

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Cross => "cross",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub image_size: usize,
    /// Number of shape kinds in use (1..=5).
    pub classes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub max_iou: f64,
    /// Object extents are drawn from multiples of `size_step` in this range.
    pub min_object_px: usize,
    pub max_object_px: usize,
    /// Extents are multiples of this so that shrinking by `1/size_step` lands on pixel edges.
    pub size_step: usize,
    /// Minimum pixel gap between the `1/size_step`-shrunk boxes of any two objects;
    /// `None` leaves shrunk boxes unconstrained.
    pub shrunk_gap_px: Option<usize>,
    pub gray_min: u8,
    pub gray_max: u8,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            classes: 5,
            min_objects: 1,
            max_objects: 6,
            max_iou: 0.3,
            min_object_px: 15,
            max_object_px: 33,
            size_step: 3,
            shrunk_gap_px: None,
            gray_min: 40,
            gray_max: 140,
            seed: 0,
        }
    }
}

const MAX_ATTEMPTS: usize = 100;

/// Brightest object fill; the background never drops below 145.
pub const GRAY_LIMIT: u8 = 140;

impl SceneSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Spec(m));
        if !(1..=SHAPE_KINDS.len()).contains(&self.classes) {
            return err(format!(
                "classes must be in 1..={}, got {}",
                SHAPE_KINDS.len(),
                self.classes
            ));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return err(format!(
                "object count range {}..={} is empty",
                self.min_objects, self.max_objects
            ));
        }
        if self.size_step == 0 || self.min_object_px < 6 || self.min_object_px > self.max_object_px
        {
            return err("object sizes must satisfy 6 <= min_object_px <= max_object_px".into());
        }
        if self.sizes(false).is_empty() || self.sizes(true).is_empty() {
            return err(format!(
                "no admissible sizes in {}..={} with step {}",
                self.min_object_px, self.max_object_px, self.size_step
            ));
        }
        if self.max_object_px > self.image_size {
            return err("objects larger than the image".into());
        }
        if !(0.0..=1.0).contains(&self.max_iou) {
            return err("max_iou must lie in [0, 1]".into());
        }
        if self.gray_min > self.gray_max || self.gray_max > GRAY_LIMIT {
            return err(format!(
                "object gray range must satisfy gray_min <= gray_max <= {GRAY_LIMIT}"
            ));
        }
        Ok(())
    }

    /// Admissible extents; `odd` restricts to odd values (shapes with a center pixel).
    fn sizes(&self, odd: bool) -> Vec<usize> {
        (self.min_object_px..=self.max_object_px)
            .filter(|s| s % self.size_step == 0 && (!odd || s % 2 == 1))
            .collect()
    }

    pub fn class_names(&self) -> Vec<String> {
        SHAPE_KINDS[..self.classes]
            .iter()
            .map(|k| k.name().to_string())
            .collect()
    }
}

/// Per-image generator seeded with `mix(seed) ⊕ image_id`. Mixing first keeps
/// nearby run seeds from producing permutations of the same scenes.
pub fn scene_rng(seed: u64, image_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ image_id)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pixel rectangle `[x0, x0 + w) × [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn to_bbox(self, class_id: usize, size: usize) -> BBox {
        let s = size as f64;
        BBox::from_corners(
            class_id,
            self.x0 as f64 / s,
            self.y0 as f64 / s,
            (self.x0 + self.w) as f64 / s,
            (self.y0 + self.h) as f64 / s,
        )
    }

    fn shrunk(self, step: usize) -> (usize, usize, usize, usize) {
        let (kw, kh) = (self.w / step, self.h / step);
        let (ox, oy) = ((self.w - kw) / 2, (self.h - kh) / 2);
        (
            self.x0 + ox,
            self.y0 + oy,
            self.x0 + ox + kw,
            self.y0 + oy + kh,
        )
    }
}

/// Chebyshev gap between two end-exclusive pixel rectangles (0 when touching or overlapping).
fn rect_gap(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> usize {
    let gx = b.0.saturating_sub(a.2).max(a.0.saturating_sub(b.2));
    let gy = b.1.saturating_sub(a.3).max(a.1.saturating_sub(b.3));
    gx.max(gy)
}

/// Whether pixel `(dx, dy)` of a `w × h` box belongs to the shape. Every kind
/// touches all four sides of its box, so the box is the shape's raster bound.
pub fn shape_contains(kind: ShapeKind, w: usize, h: usize, dx: usize, dy: usize) -> bool {
    let (x, y) = (dx as f64, dy as f64);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    match kind {
        ShapeKind::Square => true,
        ShapeKind::Circle | ShapeKind::Ellipse => {
            let (a, b) = (cx.max(0.5), cy.max(0.5));
            ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0 + 1e-9
        }
        ShapeKind::Triangle => {
            // Apex pixel on the top row, full-width base on the bottom row.
            let half = if h > 1 {
                (cx * dy as f64 / (h - 1) as f64).round()
            } else {
                cx
            };
            (x - cx).abs() <= half + 1e-9
        }
        ShapeKind::Cross => {
            let (tw, th) = (w / 3, h / 3);
            (dx >= tw && dx < w - tw) || (dy >= th && dy < h - th)
        }
    }
}

fn background<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Image {
    let base = rng.random_range(175.0..215.0f64);
    let tint: [f64; 3] = std::array::from_fn(|_| rng.random_range(-8.0..8.0));
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let amp = rng.random_range(0.0..20.0);
    let (ux, uy) = (angle.cos(), angle.sin());
    let noise = Normal::new(0.0, 4.0).expect("valid std");
    let mut img = Image::new(size, size, [0, 0, 0]);
    let s = size as f64;
    for y in 0..size {
        for x in 0..size {
            let proj = ((x as f64 / s - 0.5) * ux + (y as f64 / s - 0.5) * uy) * amp;
            let px: [u8; 3] = std::array::from_fn(|c| {
                let n: f64 = noise.sample(rng);
                (base + tint[c] + proj + n.clamp(-12.0, 12.0))
                    .round()
                    .clamp(0.0, 255.0) as u8
            });
            img.set(x, y, px);
        }
    }
    img
}

/// One synthetic scene: a textured light background with flat gray shapes.
/// Returned boxes are the exact raster bounds of each drawn shape.
pub fn generate_scene<R: Rng + ?Sized>(
    spec: &SceneSpec,
    rng: &mut R,
) -> Result<(Image, Vec<BBox>), DataError> {
    spec.validate()?;
    let size = spec.image_size;
    let mut img = background(size, rng);
    let n = rng.random_range(spec.min_objects..=spec.max_objects);
    let (all, odd) = (spec.sizes(false), spec.sizes(true));
    let mut placed: Vec<(Rect, BBox)> = Vec::new();
    for _ in 0..n {
        let class_id = rng.random_range(0..spec.classes);
        let kind = SHAPE_KINDS[class_id];
        let pick = |rng: &mut R, v: &[usize]| v[rng.random_range(0..v.len())];
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let (w, h) = match kind {
                ShapeKind::Circle => {
                    let d = pick(rng, &odd);
                    (d, d)
                }
                ShapeKind::Square | ShapeKind::Cross => {
                    let d = pick(rng, &all);
                    (d, d)
                }
                ShapeKind::Ellipse => {
                    let (a, b) = (pick(rng, &odd), pick(rng, &odd));
                    if a == b && odd.len() > 1 {
                        continue;
                    }
                    (a, b)
                }
                ShapeKind::Triangle => (pick(rng, &odd), pick(rng, &all)),
            };
            let rect = Rect {
                x0: rng.random_range(0..=size - w),
                y0: rng.random_range(0..=size - h),
                w,
                h,
            };
            let bbox = rect.to_bbox(class_id, size);
            let ok = placed.iter().all(|(r, b)| {
                iou(&bbox, b) <= spec.max_iou
                    && spec.shrunk_gap_px.is_none_or(|gap| {
                        rect_gap(rect.shrunk(spec.size_step), r.shrunk(spec.size_step)) >= gap
                    })
            });
            if ok {
                accepted = Some((rect, bbox));
                break;
            }
        }
        let Some((rect, bbox)) = accepted else {
            continue;
        };
        let g = rng.random_range(spec.gray_min..=spec.gray_max);
        for dy in 0..rect.h {
            for dx in 0..rect.w {
                if shape_contains(kind, rect.w, rect.h, dx, dy) {
                    img.set(rect.x0 + dx, rect.y0 + dy, [g, g, g]);
                }
            }
        }
        placed.push((rect, bbox));
    }
    Ok((img, placed.into_iter().map(|(_, b)| b).collect()))
}
