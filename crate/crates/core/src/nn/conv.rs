//! 2-D cross-correlation via im2col + SGEMM.

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn new(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Self, NnError> {
        let (n, c, h, w) = input.dims4()?;
        let (o, ci, kh, kw) = weight.dims4().map_err(|_| {
            NnError::Shape(format!(
                "conv2d weight must be OIKK, got {:?}",
                weight.shape()
            ))
        })?;
        if ci != c {
            return Err(NnError::Shape(format!(
                "conv2d: input has {c} channels but weight expects {ci}"
            )));
        }
        if kh != kw {
            return Err(NnError::Shape(format!(
                "conv2d: non-square kernel {kh}x{kw}"
            )));
        }
        if stride == 0 {
            return Err(NnError::Shape("conv2d: stride must be positive".into()));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(NnError::Shape(format!(
                "conv2d: kernel {kh} does not fit input {h}x{w} with pad {pad}"
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            k: kh,
            stride,
            pad,
            oh,
            ow,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    fn opix(&self) -> usize {
        self.oh * self.ow
    }
}

fn im2col(g: &Geom, x: &[f32], cols: &mut [f32]) {
    let p = g.opix();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &Geom, cols: &[f32], dx: &mut [f32]) {
    let p = g.opix();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c[m×n] = a · b + beta · c` with explicit row/column strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (isize, isize),
    b: &[f32],
    (rsb, csb): (isize, isize),
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices whose extents cover the strided m×k, k×n and
    // m×n views; c is row-major with row stride n.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward convolution. `weight` is `[O, C, K, K]`, `bias` is `[O]`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NnError> {
    let g = Geom::new(input, weight, stride, pad)?;
    if bias.numel() != g.o {
        return Err(NnError::Shape(format!(
            "conv2d: bias has {} entries for {} output channels",
            bias.numel(),
            g.o
        )));
    }
    let (ckk, p) = (g.ckk(), g.opix());
    let mut out = vec![0.0f32; g.n * g.o * p];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0f32; ckk * p]
    };
    let x = input.data();
    let wt = weight.data();
    for i in 0..g.n {
        let xi = &x[i * g.c * g.h * g.w..(i + 1) * g.c * g.h * g.w];
        let yi = &mut out[i * g.o * p..(i + 1) * g.o * p];
        for (oc, row) in yi.chunks_mut(p).enumerate() {
            row.fill(bias.data()[oc]);
        }
        let b: &[f32] = if g.is_pointwise() {
            xi
        } else {
            im2col(&g, xi, &mut cols);
            &cols
        };
        gemm(
            g.o,
            ckk,
            p,
            wt,
            (ckk as isize, 1),
            b,
            (p as isize, 1),
            1.0,
            yi,
        );
    }
    Tensor::from_vec(&[g.n, g.o, g.oh, g.ow], out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let g = Geom::new(input, weight, stride, pad)?;
    if grad_out.shape() != [g.n, g.o, g.oh, g.ow] {
        return Err(NnError::Shape(format!(
            "conv2d backward: grad shape {:?} does not match output [{}, {}, {}, {}]",
            grad_out.shape(),
            g.n,
            g.o,
            g.oh,
            g.ow
        )));
    }
    let (ckk, p) = (g.ckk(), g.opix());
    let x = input.data();
    let wt = weight.data();
    let go = grad_out.data();
    let mut dx = vec![0.0f32; input.numel()];
    let mut dw = vec![0.0f32; weight.numel()];
    let mut db = vec![0.0f32; g.o];
    let mut cols = vec![0.0f32; ckk * p];
    for i in 0..g.n {
        let xi = &x[i * g.c * g.h * g.w..(i + 1) * g.c * g.h * g.w];
        let gi = &go[i * g.o * p..(i + 1) * g.o * p];
        for (oc, row) in gi.chunks(p).enumerate() {
            db[oc] += row.iter().sum::<f32>();
        }
        let b: &[f32] = if g.is_pointwise() {
            xi
        } else {
            im2col(&g, xi, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        gemm(
            g.o,
            p,
            ckk,
            gi,
            (p as isize, 1),
            b,
            (1, p as isize),
            1.0,
            &mut dw,
        );
        // dcols = Wᵀ · dY
        let dxi = &mut dx[i * g.c * g.h * g.w..(i + 1) * g.c * g.h * g.w];
        if g.is_pointwise() {
            gemm(
                ckk,
                g.o,
                p,
                wt,
                (1, ckk as isize),
                gi,
                (p as isize, 1),
                0.0,
                dxi,
            );
        } else {
            gemm(
                ckk,
                g.o,
                p,
                wt,
                (1, ckk as isize),
                gi,
                (p as isize, 1),
                0.0,
                &mut cols,
            );
            col2im(&g, &cols, dxi);
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), dx)?,
        Tensor::from_vec(weight.shape(), dw)?,
        Tensor::from_vec(&[g.o], db)?,
    ))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Direct six-loop cross-correlation.
    fn reference_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, c, h, wd) = x.dims4().unwrap();
        let (o, _, k, _) = w.dims4().unwrap();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0f64; n * o * oh * ow];
        for ni in 0..n {
            for oc in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[oc] as f64;
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    let xv = x.data()
                                        [((ni * c + ci) * h + iy as usize) * wd + ix as usize];
                                    let wv = w.data()[((oc * c + ci) * k + ky) * k + kx];
                                    acc += xv as f64 * wv as f64;
                                }
                            }
                        }
                        out[((ni * o + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[n, o, oh, ow], out.into_iter().map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[1, 1, 5, 4], 1.0, &mut rng);
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::randn(&[1, 2, 5, 5], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
        let b = Tensor::randn(&[3], 1.0, &mut rng);
        let y = conv2d(&x, &w, &b, 1, 1).unwrap();
        let r = reference_conv(&x, &w, &b, 1, 1);
        assert!(y.max_abs_diff(&r) < 1e-5, "{}", y.max_abs_diff(&r));
    }

    #[test]
    fn random_geometries_match_reference() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let c = rng.random_range(1..=4);
            let o = rng.random_range(1..=4);
            let h = rng.random_range(1..=8);
            let w = rng.random_range(1..=8);
            let k = *[1usize, 3].get(rng.random_range(0..2)).unwrap();
            let pad = rng.random_range(0..=1);
            let stride = rng.random_range(1..=2);
            if h + 2 * pad < k || w + 2 * pad < k {
                continue;
            }
            let n = rng.random_range(1..=2);
            let x = Tensor::randn(&[n, c, h, w], 1.0, &mut rng);
            let wt = Tensor::randn(&[o, c, k, k], 0.5, &mut rng);
            let b = Tensor::randn(&[o], 1.0, &mut rng);
            let y = conv2d(&x, &wt, &b, stride, pad).unwrap();
            let r = reference_conv(&x, &wt, &b, stride, pad);
            assert!(y.max_abs_diff(&r) <= 1e-6, "{}", y.max_abs_diff(&r));
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 1).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("2 channels") && msg.contains("expects 3"),
            "{msg}"
        );
    }

    #[test]
    fn rejects_kernel_larger_than_padded_input() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(conv2d(&x, &w, &Tensor::zeros(&[1]), 1, 0).is_err());
    }
}
