use serde::{Deserialize, Serialize};

use super::image::{rgb_distance, Rgb};
use super::CodecError;

/// Reserved for center dots; never a class color.
pub const DOT_RED: Rgb = [255, 0, 0];
pub const MAX_CLASSES: usize = 40;
pub const MIN_PAIR_DISTANCE: f64 = 60.0;
pub const MIN_RED_DISTANCE: f64 = 100.0;

/// Largest class count for which evenly spaced fully saturated hues on
/// [30°, 330°] keep every pair at least [`MIN_PAIR_DISTANCE`] apart.
const SINGLE_RING_MAX: usize = 14;

/// Class ↔ color code.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    colors: Vec<Rgb>,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PaletteJson {
    classes: Vec<ClassJson>,
}

#[derive(Serialize, Deserialize)]
struct ClassJson {
    id: usize,
    name: String,
    rgb: [u8; 3],
}

/// `K` class colors. Up to 14 classes these are fully saturated hues evenly
/// spaced on [30°, 330°] (`hue_i = 30 + i·300/K`), which leaves a 60° window
/// around red free for center dots. Beyond that a single hue ring cannot
/// keep colors 60 apart, so colors are drawn from the chromatic points of the
/// {0, 85, 170, 255}³ lattice (all ≥ 85 apart), ordered by hue.
pub fn make_palette(k: usize) -> Result<Palette, CodecError> {
    if !(1..=MAX_CLASSES).contains(&k) {
        return Err(CodecError::PaletteSize(k));
    }
    let colors = if k <= SINGLE_RING_MAX {
        (0..k)
            .map(|i| hsv_to_rgb(30.0 + i as f64 * 300.0 / k as f64, 1.0, 1.0))
            .collect()
    } else {
        let lattice = lattice_colors();
        (0..k).map(|i| lattice[i * lattice.len() / k]).collect()
    };
    let names = (0..k).map(|i| format!("class_{i}")).collect();
    Ok(Palette { colors, names })
}

fn lattice_colors() -> Vec<Rgb> {
    const LEVELS: [u8; 4] = [0, 85, 170, 255];
    let mut out: Vec<(f64, u8, Rgb)> = Vec::new();
    for r in LEVELS {
        for g in LEVELS {
            for b in LEVELS {
                let c = [r, g, b];
                let chroma = c.iter().max().unwrap() - c.iter().min().unwrap();
                if chroma >= 85 && rgb_distance(c, DOT_RED) >= MIN_RED_DISTANCE {
                    out.push((hue_of(c), 255 - chroma, c));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    out.into_iter().map(|(_, _, c)| c).collect()
}

fn hue_of([r, g, b]: Rgb) -> f64 {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return 0.0;
    }
    let h = if max == r {
        ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    60.0 * h
}

/// Standard HSV → RGB with `h` in degrees, `s, v ∈ [0, 1]`, rounded to 8 bits.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

impl Palette {
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color(&self, class_id: usize) -> Option<Rgb> {
        self.colors.get(class_id).copied()
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn with_names(mut self, names: &[String]) -> Result<Self, CodecError> {
        if names.len() != self.colors.len() {
            return Err(CodecError::PaletteSize(names.len()));
        }
        self.names = names.to_vec();
        Ok(self)
    }

    /// Nearest class color and its distance. Ties go to the lower class id.
    pub fn nearest(&self, c: Rgb) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, &p) in self.colors.iter().enumerate() {
            let d = rgb_distance(c, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Smallest pairwise distance and smallest distance to [`DOT_RED`].
    pub fn separation(&self) -> (f64, f64) {
        let mut pair = f64::INFINITY;
        for (i, &a) in self.colors.iter().enumerate() {
            for &b in &self.colors[i + 1..] {
                pair = pair.min(rgb_distance(a, b));
            }
        }
        let red = self
            .colors
            .iter()
            .map(|&c| rgb_distance(c, DOT_RED))
            .fold(f64::INFINITY, f64::min);
        (pair, red)
    }

    pub fn to_json(&self) -> String {
        let doc = PaletteJson {
            classes: self
                .colors
                .iter()
                .zip(&self.names)
                .enumerate()
                .map(|(id, (&rgb, name))| ClassJson {
                    id,
                    name: name.clone(),
                    rgb,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("palette serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CodecError> {
        let doc: PaletteJson =
            serde_json::from_str(s).map_err(|e| CodecError::Palette(e.to_string()))?;
        let mut classes = doc.classes;
        classes.sort_by_key(|c| c.id);
        if classes.iter().enumerate().any(|(i, c)| c.id != i) {
            return Err(CodecError::Palette("class ids must be 0..K".into()));
        }
        Ok(Self {
            colors: classes.iter().map(|c| c.rgb).collect(),
            names: classes.into_iter().map(|c| c.name).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_is_orange() {
        let p = make_palette(1).unwrap();
        assert_eq!(p.colors(), &[[255, 128, 0]]);
    }

    #[test]
    fn five_class_hues() {
        let p = make_palette(5).unwrap();
        assert_eq!(
            p.colors(),
            &[
                [255, 128, 0],
                [128, 255, 0],
                [0, 255, 128],
                [0, 128, 255],
                [128, 0, 255]
            ]
        );
    }

    #[test]
    fn separation_holds_for_every_size() {
        for k in 1..=MAX_CLASSES {
            let p = make_palette(k).unwrap();
            assert_eq!(p.len(), k);
            let (pair, red) = p.separation();
            assert!(pair >= MIN_PAIR_DISTANCE, "K={k}: pair distance {pair}");
            assert!(red >= MIN_RED_DISTANCE, "K={k}: red distance {red}");
        }
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(make_palette(0), Err(CodecError::PaletteSize(0))));
        assert!(make_palette(41).is_err());
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(60.0, 1.0, 0.5), [128, 128, 0]);
    }

    #[test]
    fn json_round_trip() {
        let p = make_palette(3).unwrap();
        let json = p.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["classes"][1]["rgb"], serde_json::json!([0, 255, 42]));
        assert_eq!(v["classes"][2]["name"], "class_2");
        assert_eq!(Palette::from_json(&json).unwrap(), p);
    }

    #[test]
    fn nearest_tie_goes_to_lower_id() {
        let p = Palette::from_json(
            r#"{"classes":[{"id":0,"name":"a","rgb":[0,0,100]},{"id":1,"name":"b","rgb":[0,0,200]}]}"#,
        )
        .unwrap();
        assert_eq!(p.nearest([0, 0, 150]), (0, 50.0));
        assert_eq!(p.nearest([0, 0, 151]).0, 1);
    }
}
