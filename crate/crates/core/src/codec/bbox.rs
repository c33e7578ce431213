/// Axis-aligned, class-labelled box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl BBox {
    /// Ground-truth box (score 1).
    pub fn new(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            class_id,
            cx,
            cy,
            w,
            h,
            score: 1.0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    /// Box from corner coordinates `[x0, x1] × [y0, y1]`.
    pub fn from_corners(class_id: usize, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(class_id, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn x1(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y0(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn y1(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Clips the extent to the unit square; the center follows the clipped extent.
    pub fn clamped(self) -> Self {
        let x0 = self.x0().clamp(0.0, 1.0);
        let x1 = self.x1().clamp(0.0, 1.0);
        let y0 = self.y0().clamp(0.0, 1.0);
        let y1 = self.y1().clamp(0.0, 1.0);
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
            ..self
        }
    }

    /// Positive size, finite, inside the unit square, score in `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        const TOL: f64 = 1e-9;
        [self.cx, self.cy, self.w, self.h, self.score]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
            && self.x0() >= -TOL
            && self.y0() >= -TOL
            && self.x1() <= 1.0 + TOL
            && self.y1() <= 1.0 + TOL
            && (0.0..=1.0).contains(&self.score)
    }
}

/// Scales width and height by `r`, keeping center and class.
pub fn shrink_box(b: BBox, r: f64) -> BBox {
    debug_assert!(r > 0.0 && r <= 1.0, "shrink ratio {r} outside (0, 1]");
    BBox {
        w: b.w * r,
        h: b.h * r,
        ..b
    }
}

/// Inverse of [`shrink_box`], clipped to the image.
pub fn unshrink_box(b: BBox, r: f64) -> BBox {
    unshrink_unclamped(b, r).clamped()
}

pub(crate) fn unshrink_unclamped(b: BBox, r: f64) -> BBox {
    debug_assert!(r > 0.0 && r <= 1.0, "shrink ratio {r} outside (0, 1]");
    BBox {
        w: b.w / r,
        h: b.h / r,
        ..b
    }
}
