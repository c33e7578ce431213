//! Reverse-mode differentiation over the handful of layers the denoiser uses.
//!
//! A [`Graph`] records every operation eagerly (the forward value is computed
//! on the spot) and [`Graph::backward`] walks the tape in reverse. Parameter
//! nodes borrow their values from a [`ParamStore`]; gradients come back as a
//! [`Gradients`] bundle the caller folds into the store.

use std::borrow::Cow;

use super::conv::{conv2d, conv2d_backward};
use super::{NnError, ParamId, ParamStore, Tensor};

pub const GROUP_NORM_EPS: f32 = 1e-5;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        mean: Vec<f32>,
        rstd: Vec<f32>,
    },
    Silu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddChannel {
        x: Var,
        e: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat(Var, Var),
    Upsample2x(Var),
    Affine {
        x: Var,
        scale: f32,
    },
    Sum(Var),
    Mse(Var, Var),
    L1(Var, Var),
    GradMap(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Per-parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    entries: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.entries.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.entries.iter().map(|(p, g)| (*p, g))
    }

    /// Adds every gradient into the matching `Param::grad`.
    pub fn accumulate_into(self, store: &mut ParamStore) -> Result<(), NnError> {
        for (id, g) in self.entries {
            store.get_mut(id).grad.add_assign(&g)?;
        }
        Ok(())
    }
}

pub struct Graph<'a> {
    store: Option<&'a ParamStore>,
    nodes: Vec<Node<'a>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    /// A graph without trainable parameters.
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
        }
    }

    pub fn with_params(store: &'a ParamStore) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var, NnError> {
        if !value.all_finite() {
            return Err(NnError::NonFinite(format!("output of {}", op_name(&op))));
        }
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant leaf; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Input,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self
            .store
            .expect("graph was built without a parameter store");
        self.nodes.push(Node {
            value: Cow::Borrowed(store.value(id)),
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var, NnError> {
        let y = conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            y,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
            ng,
        )
    }

    pub fn group_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
    ) -> Result<Var, NnError> {
        let xt = self.value(x);
        let (n, c, h, w) = xt.dims4()?;
        if groups == 0 || c % groups != 0 {
            return Err(NnError::Shape(format!(
                "group_norm: {c} channels not divisible into {groups} groups"
            )));
        }
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(NnError::Shape(format!(
                "group_norm: affine params must have {c} entries"
            )));
        }
        let cg = c / groups;
        let m = cg * h * w;
        let (gm, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0f32; xt.numel()];
        let mut means = Vec::with_capacity(n * groups);
        let mut rstds = Vec::with_capacity(n * groups);
        for ni in 0..n {
            for g in 0..groups {
                let off = (ni * c + g * cg) * h * w;
                let seg = &xt.data()[off..off + m];
                let mean = seg.iter().map(|&v| v as f64).sum::<f64>() / m as f64;
                let var = seg.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / m as f64;
                let rstd = 1.0 / (var + GROUP_NORM_EPS as f64).sqrt();
                for (j, (&v, o)) in seg.iter().zip(&mut out[off..off + m]).enumerate() {
                    let ch = g * cg + j / (h * w);
                    *o = ((v as f64 - mean) * rstd) as f32 * gm[ch] + bt[ch];
                }
                means.push(mean as f32);
                rstds.push(rstd as f32);
            }
        }
        let y = Tensor::from_vec(xt.shape(), out)?;
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            y,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean: means,
                rstd: rstds,
            },
            ng,
        )
    }

    pub fn silu(&mut self, x: Var) -> Result<Var, NnError> {
        let y = self.value(x).map(|v| v * sigmoid(v));
        let ng = self.needs(x);
        self.push(y, Op::Silu(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(y, Op::Add(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(y, Op::Mul(a, b), ng)
    }

    /// Broadcast-adds `e: [N, C]` over the spatial dims of `x: [N, C, H, W]`.
    pub fn add_channel(&mut self, x: Var, e: Var) -> Result<Var, NnError> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let et = self.value(e);
        if et.shape() != [n, c] {
            return Err(NnError::Shape(format!(
                "add_channel: expected [{n}, {c}] embedding, got {:?}",
                et.shape()
            )));
        }
        let mut y = self.value(x).clone();
        for (plane, &bias) in y.data_mut().chunks_mut(h * w).zip(et.data()) {
            plane.iter_mut().for_each(|v| *v += bias);
        }
        let ng = self.needs(x) || self.needs(e);
        self.push(y, Op::AddChannel { x, e }, ng)
    }

    /// `x: [N, in]`, `w: [out, in]`, `b: [out]` → `[N, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (n, din) = match xt.shape() {
            &[n, d] => (n, d),
            s => {
                return Err(NnError::Shape(format!(
                    "linear: expected [N, in] input, got {s:?}"
                )))
            }
        };
        let dout = match wt.shape() {
            &[o, i] if i == din => o,
            s => {
                return Err(NnError::Shape(format!(
                    "linear: weight {s:?} incompatible with input width {din}"
                )))
            }
        };
        if bt.numel() != dout {
            return Err(NnError::Shape(format!("linear: bias needs {dout} entries")));
        }
        let mut out = vec![0.0f32; n * dout];
        for i in 0..n {
            let xi = &xt.data()[i * din..(i + 1) * din];
            for o in 0..dout {
                let wo = &wt.data()[o * din..(o + 1) * din];
                out[i * dout + o] =
                    bt.data()[o] + wo.iter().zip(xi).map(|(a, b)| a * b).sum::<f32>();
            }
        }
        let y = Tensor::from_vec(&[n, dout], out)?;
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(y, Op::Linear { x, w, b }, ng)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let y = Tensor::concat_channels(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(y, Op::Concat(a, b), ng)
    }

    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var, NnError> {
        let xt = self.value(x);
        let (n, c, h, w) = xt.dims4()?;
        let mut out = vec![0.0f32; n * c * h * w * 4];
        for (p, plane) in xt.data().chunks(h * w).enumerate() {
            let dst = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
            for y in 0..2 * h {
                for x in 0..2 * w {
                    dst[y * 2 * w + x] = plane[(y / 2) * w + x / 2];
                }
            }
        }
        let y = Tensor::from_vec(&[n, c, 2 * h, 2 * w], out)?;
        let ng = self.needs(x);
        self.push(y, Op::Upsample2x(x), ng)
    }

    /// `scale · x`.
    pub fn scale(&mut self, x: Var, scale: f32) -> Result<Var, NnError> {
        let y = self.value(x).scale(scale);
        let ng = self.needs(x);
        self.push(y, Op::Affine { x, scale }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let y = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(y, Op::Sum(x), ng)
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (at, bt) = (self.value(a), self.value(b));
        at.ensure_same_shape(bt, "mse")?;
        let s: f64 = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(p, q)| ((p - q) as f64).powi(2))
            .sum();
        let y = Tensor::scalar((s / at.numel() as f64) as f32);
        let ng = self.needs(a) || self.needs(b);
        self.push(y, Op::Mse(a, b), ng)
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (at, bt) = (self.value(a), self.value(b));
        at.ensure_same_shape(bt, "l1")?;
        let s: f64 = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(p, q)| (p - q).abs() as f64)
            .sum();
        let y = Tensor::scalar((s / at.numel() as f64) as f32);
        let ng = self.needs(a) || self.needs(b);
        self.push(y, Op::L1(a, b), ng)
    }

    /// Squared gradient magnitude summed over channels: `[N, C, H, W] → [N, 1, H, W]`.
    pub fn grad_map(&mut self, x: Var) -> Result<Var, NnError> {
        let y = grad_map_forward(self.value(x))?;
        let ng = self.needs(x);
        self.push(y, Op::GradMap(x), ng)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NnError::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let mut send = |v: Var, g: Tensor| -> Result<(), NnError> {
                if !self.nodes[v.0].needs_grad {
                    return Ok(());
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => {
                        *slot = Some(g);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.entries.push((*id, gy)),
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let (dx, dw, db) =
                        conv2d_backward(self.value(*x), self.value(*w), &gy, *stride, *pad)?;
                    send(*x, dx)?;
                    send(*w, dw)?;
                    send(*b, db.reshape(self.value(*b).shape())?)?;
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    mean,
                    rstd,
                } => {
                    let (dx, dg, db) = group_norm_backward(
                        self.value(*x),
                        self.value(*gamma),
                        &gy,
                        *groups,
                        mean,
                        rstd,
                    )?;
                    send(*x, dx)?;
                    send(*gamma, dg.reshape(self.value(*gamma).shape())?)?;
                    send(*beta, db.reshape(self.value(*beta).shape())?)?;
                }
                Op::Silu(x) => {
                    let dx = self.value(*x).zip_map(&gy, |v, g| {
                        let s = sigmoid(v);
                        g * s * (1.0 + v * (1.0 - s))
                    })?;
                    send(*x, dx)?;
                }
                Op::Add(a, b) => {
                    send(*a, gy.clone())?;
                    send(*b, gy)?;
                }
                Op::Mul(a, b) => {
                    send(*a, gy.zip_map(self.value(*b), |g, q| g * q)?)?;
                    send(*b, gy.zip_map(self.value(*a), |g, p| g * p)?)?;
                }
                Op::AddChannel { x, e } => {
                    let et = self.value(*e);
                    let (_, _, h, w) = gy.dims4()?;
                    let de: Vec<f32> = gy.data().chunks(h * w).map(|p| p.iter().sum()).collect();
                    send(*e, Tensor::from_vec(et.shape(), de)?)?;
                    send(*x, gy)?;
                }
                Op::Linear { x, w, b } => {
                    let (xt, wt) = (self.value(*x), self.value(*w));
                    let (n, din) = (xt.shape()[0], xt.shape()[1]);
                    let dout = wt.shape()[0];
                    let mut dx = vec![0.0f32; n * din];
                    let mut dw = vec![0.0f32; dout * din];
                    let mut db = vec![0.0f32; dout];
                    for i in 0..n {
                        let xi = &xt.data()[i * din..(i + 1) * din];
                        for o in 0..dout {
                            let g = gy.data()[i * dout + o];
                            db[o] += g;
                            let wo = &wt.data()[o * din..(o + 1) * din];
                            for k in 0..din {
                                dw[o * din + k] += g * xi[k];
                                dx[i * din + k] += g * wo[k];
                            }
                        }
                    }
                    send(*x, Tensor::from_vec(xt.shape(), dx)?)?;
                    send(*w, Tensor::from_vec(wt.shape(), dw)?)?;
                    send(*b, Tensor::from_vec(self.value(*b).shape(), db)?)?;
                }
                Op::Concat(a, b) => {
                    let (n, ca, h, w) = self.value(*a).dims4()?;
                    let cb = self.value(*b).shape()[1];
                    let plane = h * w;
                    let mut da = Vec::with_capacity(n * ca * plane);
                    let mut dbv = Vec::with_capacity(n * cb * plane);
                    for chunk in gy.data().chunks((ca + cb) * plane) {
                        da.extend_from_slice(&chunk[..ca * plane]);
                        dbv.extend_from_slice(&chunk[ca * plane..]);
                    }
                    send(*a, Tensor::from_vec(self.value(*a).shape(), da)?)?;
                    send(*b, Tensor::from_vec(self.value(*b).shape(), dbv)?)?;
                }
                Op::Upsample2x(x) => {
                    let xt = self.value(*x);
                    let (_, _, h, w) = xt.dims4()?;
                    let mut dx = vec![0.0f32; xt.numel()];
                    for (p, plane) in gy.data().chunks(4 * h * w).enumerate() {
                        let dst = &mut dx[p * h * w..(p + 1) * h * w];
                        for y in 0..2 * h {
                            for x in 0..2 * w {
                                dst[(y / 2) * w + x / 2] += plane[y * 2 * w + x];
                            }
                        }
                    }
                    send(*x, Tensor::from_vec(xt.shape(), dx)?)?;
                }
                Op::Affine { x, scale } => send(*x, gy.scale(*scale))?,
                Op::Sum(x) => {
                    let g = gy.item();
                    send(*x, Tensor::full(self.value(*x).shape(), g))?;
                }
                Op::Mse(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let k = 2.0 * gy.item() / at.numel() as f32;
                    let da = at.zip_map(bt, |p, q| k * (p - q))?;
                    if self.needs(*b) {
                        send(*b, da.scale(-1.0))?;
                    }
                    send(*a, da)?;
                }
                Op::L1(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let k = gy.item() / at.numel() as f32;
                    let da = at.zip_map(bt, |p, q| k * sign(p - q))?;
                    if self.needs(*b) {
                        send(*b, da.scale(-1.0))?;
                    }
                    send(*a, da)?;
                }
                Op::GradMap(x) => {
                    let dx = grad_map_backward(self.value(*x), &gy)?;
                    send(*x, dx)?;
                }
            }
        }
        Ok(out)
    }
}

/// Reverse-mode gradient evaluation: `∂loss/∂param` for every parameter on the tape.
pub fn grad_eval(graph: &Graph<'_>, loss: Var) -> Result<Gradients, NnError> {
    graph.backward(loss)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param(_) => "param",
        Op::Conv2d { .. } => "conv2d",
        Op::GroupNorm { .. } => "group_norm",
        Op::Silu(_) => "silu",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::AddChannel { .. } => "add_channel",
        Op::Linear { .. } => "linear",
        Op::Concat(..) => "concat",
        Op::Upsample2x(_) => "upsample2x",
        Op::Affine { .. } => "scale",
        Op::Sum(_) => "sum",
        Op::Mse(..) => "mse",
        Op::L1(..) => "l1",
        Op::GradMap(_) => "grad_map",
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn sign(x: f32) -> f32 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn group_norm_backward(
    x: &Tensor,
    gamma: &Tensor,
    gy: &Tensor,
    groups: usize,
    mean: &[f32],
    rstd: &[f32],
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let cg = c / groups;
    let m = (cg * hw) as f64;
    let gm = gamma.data();
    let mut dx = vec![0.0f32; x.numel()];
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for ni in 0..n {
        for g in 0..groups {
            let stat = ni * groups + g;
            let (mu, rs) = (mean[stat] as f64, rstd[stat] as f64);
            let off = (ni * c + g * cg) * hw;
            let xs = &x.data()[off..off + cg * hw];
            let gs = &gy.data()[off..off + cg * hw];
            let (mut sum_dxhat, mut sum_dxhat_xhat) = (0.0f64, 0.0f64);
            for j in 0..cg * hw {
                let ch = g * cg + j / hw;
                let xhat = (xs[j] as f64 - mu) * rs;
                let dy = gs[j] as f64;
                dgamma[ch] += dy * xhat;
                dbeta[ch] += dy;
                let dxhat = dy * gm[ch] as f64;
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
            }
            let dst = &mut dx[off..off + cg * hw];
            for j in 0..cg * hw {
                let ch = g * cg + j / hw;
                let xhat = (xs[j] as f64 - mu) * rs;
                let dxhat = gs[j] as f64 * gm[ch] as f64;
                dst[j] = (rs / m * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)) as f32;
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        Tensor::from_vec(&[c], dgamma.into_iter().map(|v| v as f32).collect())?,
        Tensor::from_vec(&[c], dbeta.into_iter().map(|v| v as f32).collect())?,
    ))
}

/// Difference stencil along one axis at index `i` of an axis of length `len`:
/// `(plus, minus, factor)` so that the derivative is `factor · (z[plus] − z[minus])`.
/// Interior points use central differences; borders use one-sided differences
/// scaled by two so they live on the same scale.
#[inline]
fn stencil(i: usize, len: usize) -> (usize, usize, f32) {
    if i == 0 {
        (1, 0, 2.0)
    } else if i == len - 1 {
        (len - 1, len - 2, 2.0)
    } else {
        (i + 1, i - 1, 1.0)
    }
}

pub(crate) fn grad_map_forward(z: &Tensor) -> Result<Tensor, NnError> {
    let (n, c, h, w) = z.dims4()?;
    if h < 3 || w < 3 {
        return Err(NnError::Shape(format!(
            "grad_map needs at least 3x3 planes, got {h}x{w}"
        )));
    }
    let mut out = vec![0.0f32; n * h * w];
    for ni in 0..n {
        let dst = &mut out[ni * h * w..(ni + 1) * h * w];
        for ci in 0..c {
            let plane = &z.data()[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
            for u in 0..h {
                let (up, um, fu) = stencil(u, h);
                for v in 0..w {
                    let (vp, vm, fv) = stencil(v, w);
                    let zu = fu * (plane[up * w + v] - plane[um * w + v]);
                    let zv = fv * (plane[u * w + vp] - plane[u * w + vm]);
                    dst[u * w + v] += zu * zu + zv * zv;
                }
            }
        }
    }
    Tensor::from_vec(&[n, 1, h, w], out)
}

fn grad_map_backward(z: &Tensor, gy: &Tensor) -> Result<Tensor, NnError> {
    let (n, c, h, w) = z.dims4()?;
    let mut dz = vec![0.0f32; z.numel()];
    for ni in 0..n {
        let gplane = &gy.data()[ni * h * w..(ni + 1) * h * w];
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            let plane = &z.data()[base..base + h * w];
            let dst = &mut dz[base..base + h * w];
            for u in 0..h {
                let (up, um, fu) = stencil(u, h);
                for v in 0..w {
                    let (vp, vm, fv) = stencil(v, w);
                    let g = gplane[u * w + v];
                    let zu = fu * (plane[up * w + v] - plane[um * w + v]);
                    let zv = fv * (plane[u * w + vp] - plane[u * w + vm]);
                    let ku = 2.0 * g * zu * fu;
                    let kv = 2.0 * g * zv * fv;
                    dst[up * w + v] += ku;
                    dst[um * w + v] -= ku;
                    dst[u * w + vp] += kv;
                    dst[u * w + vm] -= kv;
                }
            }
        }
    }
    Tensor::from_vec(z.shape(), dz)
}
