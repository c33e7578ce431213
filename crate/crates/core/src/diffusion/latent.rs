use crate::codec::Image;
use crate::nn::Tensor;

use super::DiffusionError;

/// Maps images to and from the space the denoiser works in.
pub trait LatentCodec {
    fn channels(&self) -> usize;
    fn encode(&self, image: &Image) -> Tensor;
    fn decode(&self, latent: &Tensor) -> Result<Image, DiffusionError>;
}

/// Pixel space with `[0, 255] ↔ [−1, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PixelCodec;

impl LatentCodec for PixelCodec {
    fn channels(&self) -> usize {
        3
    }

    /// `[1, 3, H, W]` tensor.
    fn encode(&self, image: &Image) -> Tensor {
        let (w, h) = (image.width(), image.height());
        let mut data = vec![0.0f32; 3 * w * h];
        for (i, px) in image.pixels().chunks(3).enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = px[c] as f32 / 127.5 - 1.0;
            }
        }
        Tensor::from_vec(&[1, 3, h, w], data).expect("shape matches buffer")
    }

    /// Clamps to the valid pixel range and rounds to 8 bits.
    fn decode(&self, latent: &Tensor) -> Result<Image, DiffusionError> {
        let (n, c, h, w) = latent.dims4()?;
        if n != 1 || c != 3 {
            return Err(DiffusionError::Shape(format!(
                "pixel decode needs a [1, 3, H, W] latent, got {:?}",
                latent.shape()
            )));
        }
        let mut pixels = vec![0u8; 3 * w * h];
        for i in 0..w * h {
            for ch in 0..3 {
                let v = (latent.data()[ch * w * h + i] + 1.0) * 127.5;
                pixels[i * 3 + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        Ok(Image::from_raw(w, h, pixels).expect("buffer sized for image"))
    }
}
