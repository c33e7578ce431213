use rand::Rng;

use crate::nn::Tensor;

use super::DiffusionError;

/// Multi-resolution Gaussian noise for an NCHW `shape`.
///
/// Sums `strengthⁱ · up(N(0, I) at (⌈H/2ⁱ⌉, ⌈W/2ⁱ⌉))` for `i = 0, 1, …` down to
/// and including the 1×1 scale, with nearest-neighbour upsampling, then divides
/// by `sqrt(Σ strength²ⁱ)` so every element has unit variance.
pub fn multires_noise<R: Rng + ?Sized>(
    shape: &[usize],
    strength: f32,
    rng: &mut R,
) -> Result<Tensor, DiffusionError> {
    if !(0.0..1.0).contains(&strength) {
        return Err(DiffusionError::Noise(format!(
            "strength must lie in [0, 1), got {strength}"
        )));
    }
    let (n, c, h, w) = match *shape {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(DiffusionError::Shape(format!(
                "multires noise needs NCHW, got {shape:?}"
            )))
        }
    };
    let mut out = Tensor::randn(shape, 1.0, rng);
    if strength == 0.0 {
        return Ok(out);
    }
    let mut weight = 1.0f32;
    let mut total_var = 1.0f64;
    let mut factor = 1usize;
    while h.div_ceil(factor) > 1 || w.div_ceil(factor) > 1 {
        factor *= 2;
        weight *= strength;
        total_var += (weight as f64).powi(2);
        let (sh, sw) = (h.div_ceil(factor), w.div_ceil(factor));
        let coarse = Tensor::randn(&[n, c, sh, sw], 1.0, rng);
        for (plane, small) in out
            .data_mut()
            .chunks_mut(h * w)
            .zip(coarse.data().chunks(sh * sw))
        {
            for y in 0..h {
                for x in 0..w {
                    plane[y * w + x] += weight * small[(y / factor) * sw + x / factor];
                }
            }
        }
    }
    let norm = (1.0 / total_var.sqrt()) as f32;
    out.data_mut().iter_mut().for_each(|v| *v *= norm);
    Ok(out)
}
