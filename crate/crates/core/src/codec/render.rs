use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::bbox::{shrink_box, BBox};
use super::image::{Image, Rgb};
use super::palette::{Palette, DOT_RED};
use super::CodecError;

/// Normalized coordinates within this distance of a pixel boundary snap to it,
/// so boxes that sit exactly on the pixel grid are not widened by rounding noise.
const GRID_SNAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotationStyle {
    pub shrink_ratio: f64,
    pub dot_radius_px: u32,
    pub dot_color: Rgb,
    pub draw_dots: bool,
    /// Paint on a white canvas instead of the input image.
    pub white_background: bool,
}

impl Default for AnnotationStyle {
    fn default() -> Self {
        Self {
            shrink_ratio: 1.0 / 3.0,
            dot_radius_px: 2,
            dot_color: DOT_RED,
            draw_dots: true,
            white_background: false,
        }
    }
}

/// The four annotation encodings compared in the target-design ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationVariant {
    /// Full-size boxes on a white canvas.
    WhiteBackground,
    /// Full-size boxes over the image.
    FullBoxes,
    /// Shrunk boxes over the image.
    Shrunk,
    /// Shrunk boxes with red center dots (the default encoding).
    ShrunkWithDots,
}

impl std::str::FromStr for AnnotationVariant {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Self::WhiteBackground),
            "b" => Ok(Self::FullBoxes),
            "c" => Ok(Self::Shrunk),
            "d" => Ok(Self::ShrunkWithDots),
            other => Err(CodecError::Style(format!(
                "unknown variant {other:?}, expected a|b|c|d"
            ))),
        }
    }
}

impl AnnotationStyle {
    pub fn validate(&self) -> Result<(), CodecError> {
        if !(self.shrink_ratio > 0.0 && self.shrink_ratio <= 1.0) {
            return Err(CodecError::Style(format!(
                "shrink_ratio must lie in (0, 1], got {}",
                self.shrink_ratio
            )));
        }
        if self.dot_color != DOT_RED {
            return Err(CodecError::Style(
                "dot_color is reserved as (255, 0, 0)".into(),
            ));
        }
        Ok(())
    }

    /// Style for an ablation variant; `base` supplies the shrink ratio and dot size.
    pub fn for_variant(base: &AnnotationStyle, variant: AnnotationVariant) -> Self {
        let full = AnnotationStyle {
            shrink_ratio: 1.0,
            draw_dots: false,
            ..*base
        };
        match variant {
            AnnotationVariant::WhiteBackground => AnnotationStyle {
                white_background: true,
                ..full
            },
            AnnotationVariant::FullBoxes => full,
            AnnotationVariant::Shrunk => AnnotationStyle {
                draw_dots: false,
                white_background: false,
                ..*base
            },
            AnnotationVariant::ShrunkWithDots => AnnotationStyle {
                draw_dots: true,
                white_background: false,
                ..*base
            },
        }
    }
}

/// Pixel columns and rows covered by `b`: `floor(x0·W) ≤ j < ceil(x1·W)`, likewise
/// vertically. Empty extents collapse to the pixel containing the center.
pub fn pixel_extent(b: &BBox, width: usize, height: usize) -> (Range<usize>, Range<usize>) {
    (
        axis_extent(b.x0(), b.x1(), b.cx, width),
        axis_extent(b.y0(), b.y1(), b.cy, height),
    )
}

fn axis_extent(lo: f64, hi: f64, center: f64, n: usize) -> Range<usize> {
    let nf = n as f64;
    let a = (lo * nf + GRID_SNAP).floor().clamp(0.0, nf) as usize;
    let b = (hi * nf - GRID_SNAP).ceil().clamp(0.0, nf) as usize;
    if b > a {
        a..b
    } else {
        let c = center_pixel(center, n);
        c..c + 1
    }
}

fn center_pixel(c: f64, n: usize) -> usize {
    ((c * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Pixels of the filled disc of `radius` around `b`'s center pixel.
pub fn dot_pixels(b: &BBox, radius: u32, width: usize, height: usize) -> Vec<(usize, usize)> {
    let (cx, cy) = (
        center_pixel(b.cx, width) as i64,
        center_pixel(b.cy, height) as i64,
    );
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (cx + dx, cy + dy);
            if dx * dx + dy * dy <= r * r
                && x >= 0
                && y >= 0
                && x < width as i64
                && y < height as i64
            {
                out.push((x as usize, y as usize));
            }
        }
    }
    out
}

/// Painting order: larger boxes first, ties by (class, cx, cy).
fn paint_order(a: &BBox, b: &BBox) -> Ordering {
    b.area()
        .total_cmp(&a.area())
        .then(a.class_id.cmp(&b.class_id))
        .then(a.cx.total_cmp(&b.cx))
        .then(a.cy.total_cmp(&b.cy))
}

/// Paints `boxes` as opaque class-colored rectangles (shrunk by the style's
/// ratio), then a red dot at every box center.
pub fn render_annotation(
    image: &Image,
    boxes: &[BBox],
    style: &AnnotationStyle,
    palette: &Palette,
) -> Result<Image, CodecError> {
    style.validate()?;
    let colors: Vec<Rgb> = boxes
        .iter()
        .map(|b| {
            palette
                .color(b.class_id)
                .ok_or(CodecError::ClassOutOfRange {
                    class_id: b.class_id,
                    classes: palette.len(),
                })
        })
        .collect::<Result<_, _>>()?;
    let mut out = if style.white_background {
        Image::new(image.width(), image.height(), [255, 255, 255])
    } else {
        image.clone()
    };
    let (w, h) = (out.width(), out.height());
    if w == 0 || h == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| paint_order(&boxes[i], &boxes[j]));
    for &i in &order {
        let (xs, ys) = pixel_extent(&shrink_box(boxes[i], style.shrink_ratio), w, h);
        for y in ys {
            for x in xs.clone() {
                out.set(x, y, colors[i]);
            }
        }
    }
    if style.draw_dots {
        for &i in &order {
            for (x, y) in dot_pixels(&boxes[i], style.dot_radius_px, w, h) {
                out.set(x, y, style.dot_color);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::make_palette;

    fn gray(w: usize, h: usize) -> Image {
        Image::new(w, h, [90, 90, 90])
    }

    #[test]
    fn no_boxes_is_identity() {
        let img = gray(10, 7);
        let p = make_palette(3).unwrap();
        assert_eq!(
            render_annotation(&img, &[], &AnnotationStyle::default(), &p).unwrap(),
            img
        );
    }

    #[test]
    fn single_box_pixel_count() {
        // Shrunk extent: x ∈ [0.4, 0.6] → columns 24..36, y ∈ [0.45, 0.55] → rows 27..33.
        let img = gray(60, 60);
        let p = make_palette(2).unwrap();
        let b = BBox::new(1, 0.5, 0.5, 0.6, 0.3);
        let out = render_annotation(&img, &[b], &AnnotationStyle::default(), &p).unwrap();
        let class_px = count(&out, p.colors()[1]);
        let red_px = count(&out, DOT_RED);
        assert_eq!(red_px, 13);
        assert_eq!(class_px + red_px, 12 * 6);
        for y in 27..33 {
            for x in 24..36 {
                assert_ne!(out.get(x, y), [90, 90, 90]);
            }
        }
        assert_eq!(out.get(23, 30), [90, 90, 90]);
        assert_eq!(out.get(36, 30), [90, 90, 90]);
        assert_eq!(out.get(30, 30), DOT_RED);
    }

    #[test]
    fn smaller_box_painted_on_top() {
        let img = gray(60, 60);
        let p = make_palette(2).unwrap();
        let big = BBox::new(0, 0.5, 0.5, 0.9, 0.9);
        let small = BBox::new(1, 0.5, 0.5, 0.3, 0.3);
        let style = AnnotationStyle {
            draw_dots: false,
            ..Default::default()
        };
        for boxes in [[big, small], [small, big]] {
            let out = render_annotation(&img, &boxes, &style, &p).unwrap();
            let (xs, ys) = pixel_extent(&shrink_box(small, style.shrink_ratio), 60, 60);
            for y in ys {
                for x in xs.clone() {
                    assert_eq!(out.get(x, y), p.colors()[1]);
                }
            }
        }
    }

    #[test]
    fn degenerate_box_covers_one_pixel() {
        let img = gray(20, 20);
        let p = make_palette(1).unwrap();
        let b = BBox::new(0, 0.51, 0.52, 0.01, 0.01);
        let style = AnnotationStyle {
            draw_dots: false,
            ..Default::default()
        };
        let out = render_annotation(&img, &[b], &style, &p).unwrap();
        assert_eq!(count(&out, p.colors()[0]), 1);
        assert_eq!(out.get(10, 10), p.colors()[0]);
    }

    #[test]
    fn out_of_range_class_rejected() {
        let p = make_palette(2).unwrap();
        let err = render_annotation(
            &gray(8, 8),
            &[BBox::new(2, 0.5, 0.5, 0.5, 0.5)],
            &Default::default(),
            &p,
        );
        assert!(matches!(
            err,
            Err(CodecError::ClassOutOfRange {
                class_id: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn grid_aligned_box_is_exact() {
        // A 30-pixel box starting at column 12 shrinks to exactly columns 22..32.
        let b = BBox::from_corners(0, 12.0 / 64.0, 3.0 / 64.0, 42.0 / 64.0, 33.0 / 64.0);
        let (xs, ys) = pixel_extent(&shrink_box(b, 1.0 / 3.0), 64, 64);
        assert_eq!((xs, ys), (22..32, 13..23));
    }

    #[test]
    fn variants_differ_only_at_dots() {
        let img = gray(32, 32);
        let p = make_palette(3).unwrap();
        let boxes = [
            BBox::new(0, 0.3, 0.3, 0.3, 0.3),
            BBox::new(2, 0.7, 0.7, 0.4, 0.2),
        ];
        let base = AnnotationStyle::default();
        let c = render_annotation(
            &img,
            &boxes,
            &AnnotationStyle::for_variant(&base, AnnotationVariant::Shrunk),
            &p,
        )
        .unwrap();
        let d = render_annotation(
            &img,
            &boxes,
            &AnnotationStyle::for_variant(&base, AnnotationVariant::ShrunkWithDots),
            &p,
        )
        .unwrap();
        let dots: Vec<_> = boxes
            .iter()
            .flat_map(|b| dot_pixels(b, 2, 32, 32))
            .collect();
        for y in 0..32 {
            for x in 0..32 {
                if dots.contains(&(x, y)) {
                    assert_eq!(d.get(x, y), DOT_RED);
                } else {
                    assert_eq!(c.get(x, y), d.get(x, y));
                }
            }
        }
        let a = render_annotation(
            &img,
            &boxes,
            &AnnotationStyle::for_variant(&base, AnnotationVariant::WhiteBackground),
            &p,
        )
        .unwrap();
        assert_eq!(a.get(0, 31), [255, 255, 255]);
    }

    fn count(img: &Image, c: Rgb) -> usize {
        img.pixels().chunks(3).filter(|p| *p == c).count()
    }
}
