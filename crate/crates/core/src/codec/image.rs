use std::io::{BufRead, Write};

use super::CodecError;

pub type Rgb = [u8; 3];

/// 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        let pixels = fill
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, CodecError> {
        if pixels.len() != width * height * 3 {
            return Err(CodecError::Ppm(format!(
                "{width}x{height} image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<(), CodecError> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a binary (P6, maxval 255) PPM; `#` comments in the header are skipped.
    pub fn read_ppm<R: BufRead>(mut r: R) -> Result<Self, CodecError> {
        let mut header = Vec::new();
        let mut tokens: Vec<String> = Vec::new();
        while tokens.len() < 4 {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)
                .map_err(|_| CodecError::Ppm("truncated header".into()))?;
            match byte[0] {
                b'#' => {
                    let mut skip = Vec::new();
                    r.read_until(b'\n', &mut skip)?;
                }
                c if c.is_ascii_whitespace() => {
                    if !header.is_empty() {
                        tokens.push(String::from_utf8_lossy(&header).into_owned());
                        header.clear();
                    }
                }
                c => header.push(c),
            }
        }
        if tokens[0] != "P6" {
            return Err(CodecError::Ppm(format!(
                "unsupported magic {:?}",
                tokens[0]
            )));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| CodecError::Ppm(format!("bad {what} {s:?}")))
        };
        let width = parse(&tokens[1], "width")?;
        let height = parse(&tokens[2], "height")?;
        if parse(&tokens[3], "maxval")? != 255 {
            return Err(CodecError::Ppm(format!("maxval {} unsupported", tokens[3])));
        }
        let mut pixels = vec![0u8; width * height * 3];
        r.read_exact(&mut pixels)
            .map_err(|_| CodecError::Ppm("truncated pixel data".into()))?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Euclidean distance in RGB space.
#[inline]
pub fn rgb_distance(a: Rgb, b: Rgb) -> f64 {
    let d: i32 = (0..3).map(|i| (a[i] as i32 - b[i] as i32).pow(2)).sum();
    (d as f64).sqrt()
}
