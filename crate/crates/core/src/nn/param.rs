use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Config(format!(
                "invalid Adam configuration {self:?}"
            )))
        }
    }
}

/// One bias-corrected Adam update. The gradient is left in place.
pub fn adam_step(param: &mut Param, cfg: &AdamConfig) -> Result<(), NnError> {
    if !param.grad.all_finite() {
        return Err(NnError::NonFinite("gradient".into()));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - (cfg.beta1 as f64).powi(t);
    let bc2 = 1.0 - (cfg.beta2 as f64).powi(t);
    let g = param.grad.data();
    let m = param.adam_m.data_mut();
    for (mi, &gi) in m.iter_mut().zip(g) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
    }
    let v = param.adam_v.data_mut();
    for (vi, &gi) in v.iter_mut().zip(g) {
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
    }
    let (m, v) = (param.adam_m.data(), param.adam_v.data());
    for ((w, &mi), &vi) in param.value.data_mut().iter_mut().zip(m).zip(v) {
        let m_hat = mi as f64 / bc1;
        let v_hat = vi as f64 / bc2;
        *w -= (cfg.lr as f64 * m_hat / (v_hat.sqrt() + cfg.eps as f64)) as f32;
    }
    Ok(())
}

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered collection of parameters. Order is the checkpoint order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.params.push(Param::new(value));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.params.iter_mut())
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Param::zero_grad);
    }

    /// Applies [`adam_step`] to every parameter; on failure names the offender.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), NnError> {
        for (name, p) in self.names.iter().zip(self.params.iter_mut()) {
            adam_step(p, cfg).map_err(|e| match e {
                NnError::NonFinite(_) => NnError::NonFinite(format!("gradient of {name}")),
                other => other,
            })?;
        }
        Ok(())
    }
}
