use super::{NnError, Tensor};

/// Sinusoidal position encoding: `[sin(v·ω_0) … sin(v·ω_{d/2−1}), cos(v·ω_0) … cos(v·ω_{d/2−1})]`
/// with `ω_i = 10000^(−i/(d/2))`.
pub fn sinusoidal_embedding(value: f32, dim: usize) -> Result<Tensor, NnError> {
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(NnError::Shape(format!(
            "sinusoidal embedding needs an even dim >= 2, got {dim}"
        )));
    }
    let half = dim / 2;
    let mut out = vec![0.0f32; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let arg = value as f64 * freq;
        out[i] = arg.sin() as f32;
        out[half + i] = arg.cos() as f32;
    }
    Tensor::from_vec(&[dim], out)
}
