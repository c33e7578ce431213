//! Training objectives: v-regression plus a timestep-weighted gradient-map term.

use serde::{Deserialize, Serialize};

use crate::nn::{Graph, NnError, Tensor, Var};

use super::DiffusionError;

/// Weights of the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f32,
    pub lambda2: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
        }
    }
}

/// `G(z) = z_u² + z_v²` summed over channels, `[N, C, H, W] → [N, 1, H, W]`.
///
/// `z_u(u, v) = z(u+1, v) − z(u−1, v)` with `u` the row index; border rows and
/// columns use the one-sided difference scaled by two.
pub fn grad_map(z: &Tensor) -> Result<Tensor, DiffusionError> {
    let mut g = Graph::new();
    let zv = g.input(z.clone());
    let out = g.grad_map(zv)?;
    Ok(g.value(out).clone())
}

/// `α_t = 1/t`.
pub fn gradient_weight(t: usize) -> Result<f32, DiffusionError> {
    if t == 0 {
        return Err(DiffusionError::Timestep { t, max: 0 });
    }
    Ok(1.0 / t as f32)
}

/// Records `α_t · mean |G(pred) − G(target)|` on the tape.
pub fn gradient_loss_node(
    g: &mut Graph<'_>,
    pred: Var,
    target: Var,
    t: usize,
) -> Result<Var, DiffusionError> {
    let w = gradient_weight(t)?;
    let gp = g.grad_map(pred)?;
    let gt = g.grad_map(target)?;
    let l1 = g.l1(gp, gt)?;
    Ok(g.scale(l1, w)?)
}

/// Records `λ1 · mean (v_pred − v_true)² + λ2 · gradient_loss(z0_pred, z0_true, t)`.
pub fn total_loss_node(
    g: &mut Graph<'_>,
    v_pred: Var,
    v_true: Var,
    z0_pred: Var,
    z0_true: Var,
    t: usize,
    weights: LossWeights,
) -> Result<Var, DiffusionError> {
    if weights.lambda1 < 0.0 || weights.lambda2 < 0.0 {
        return Err(DiffusionError::Loss(format!(
            "loss weights must be non-negative: {weights:?}"
        )));
    }
    let mse = g.mse(v_pred, v_true)?;
    let mut total = g.scale(mse, weights.lambda1)?;
    if weights.lambda2 > 0.0 {
        let grad = gradient_loss_node(g, z0_pred, z0_true, t)?;
        let grad = g.scale(grad, weights.lambda2)?;
        total = g.add(total, grad)?;
    }
    Ok(total)
}

pub fn gradient_loss(z0_pred: &Tensor, z0_true: &Tensor, t: usize) -> Result<f32, DiffusionError> {
    let mut g = Graph::new();
    let (p, q) = (g.input(z0_pred.clone()), g.input(z0_true.clone()));
    let l = gradient_loss_node(&mut g, p, q, t)?;
    Ok(g.value(l).item())
}

pub fn total_loss(
    v_pred: &Tensor,
    v_true: &Tensor,
    z0_pred: &Tensor,
    z0_true: &Tensor,
    t: usize,
    weights: LossWeights,
) -> Result<f32, DiffusionError> {
    let mut g = Graph::new();
    let vars = [v_pred, v_true, z0_pred, z0_true].map(|x| g.input(x.clone()));
    let l = total_loss_node(&mut g, vars[0], vars[1], vars[2], vars[3], t, weights)?;
    Ok(g.value(l).item())
}

impl From<NnError> for DiffusionError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Shape(s) => DiffusionError::Shape(s),
            other => DiffusionError::Nn(other),
        }
    }
}
