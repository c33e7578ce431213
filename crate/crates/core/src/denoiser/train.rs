use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::Image;
use crate::diffusion::{
    ddim_sample, forward_diffuse, multires_noise, total_loss_node, v_target, DdimPlan, LatentCodec,
    LossWeights, NoiseSchedule,
};
use crate::nn::{AdamConfig, Graph, NnError, Tensor};

use super::{DenoiserError, TaskPrompt, UNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f32,
    pub batch_size: usize,
    pub steps: usize,
    pub flip_prob: f64,
    pub prompt_y_prob: f64,
    pub multires_strength: f32,
    /// Also use multi-resolution noise for reconstruction samples.
    pub multires_for_reconstruction: bool,
    pub lambda1: f32,
    pub lambda2: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            batch_size: 1,
            steps: 20_000,
            flip_prob: 0.5,
            prompt_y_prob: 0.5,
            multires_strength: 0.5,
            multires_for_reconstruction: true,
            lambda1: 1.0,
            lambda2: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DenoiserError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.flip_prob) || !prob(self.prompt_y_prob) {
            return Err(DenoiserError::Config(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(DenoiserError::Config(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.multires_strength) {
            return Err(DenoiserError::Config(
                "multires_strength must lie in [0, 1)".into(),
            ));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(DenoiserError::Config(
                "loss weights must be non-negative".into(),
            ));
        }
        self.adam().validate()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: usize,
    pub prompt: TaskPrompt,
    pub loss: f32,
    pub wall_ms: f64,
}

fn non_finite(step: usize, t: usize, e: DenoiserError) -> DenoiserError {
    match e {
        DenoiserError::Nn(NnError::NonFinite(what)) => DenoiserError::NonFinite { step, t, what },
        other => other,
    }
}

/// One optimizer step over `batch` of `(image, annotation)` pairs.
pub fn train_step<C: LatentCodec, R: Rng + ?Sized>(
    model: &mut UNet,
    batch: &[(&Image, &Image)],
    cfg: &TrainConfig,
    sched: &NoiseSchedule,
    codec: &C,
    rng: &mut R,
    step: usize,
) -> Result<StepRecord, DenoiserError> {
    let start = Instant::now();
    if batch.is_empty() {
        return Err(DenoiserError::Config("empty batch".into()));
    }
    model.params_mut().zero_grad();
    let mut total = 0.0f32;
    let mut first = None;
    for &(x, y) in batch {
        if (x.width(), x.height()) != (y.width(), y.height()) {
            return Err(DenoiserError::Shape(format!(
                "image is {}x{} but annotation is {}x{}",
                x.width(),
                x.height(),
                y.width(),
                y.height()
            )));
        }
        let flip = rng.random::<f64>() < cfg.flip_prob;
        let (zx, zy) = if flip {
            (
                codec.encode(&x.flip_horizontal()),
                codec.encode(&y.flip_horizontal()),
            )
        } else {
            (codec.encode(x), codec.encode(y))
        };
        let prompt = if rng.random::<f64>() < cfg.prompt_y_prob {
            TaskPrompt::GenerateY
        } else {
            TaskPrompt::ReconstructX
        };
        let z0 = match prompt {
            TaskPrompt::GenerateY => zy,
            TaskPrompt::ReconstructX => zx.clone(),
        };
        let t = rng.random_range(1..=sched.len());
        first.get_or_insert((t, prompt));
        let strength = match prompt {
            TaskPrompt::ReconstructX if !cfg.multires_for_reconstruction => 0.0,
            _ => cfg.multires_strength,
        };
        let eps = multires_noise(z0.shape(), strength, rng)?;
        let zt = forward_diffuse(&z0, t, &eps, sched)?;
        let vt = v_target(&z0, &eps, t, sched)?;
        let ab = sched.alpha_bar(t);
        let grads = (|| -> Result<_, DenoiserError> {
            let mut g = Graph::with_params(model.params());
            let (ztv, zxv, vtv, z0v) = (g.input(zt), g.input(zx), g.input(vt), g.input(z0));
            let v = model.forward_node(&mut g, ztv, zxv, t, prompt)?;
            let a = g.scale(ztv, ab.sqrt() as f32)?;
            let b = g.scale(v, -(1.0 - ab).sqrt() as f32)?;
            let z0_pred = g.add(a, b)?;
            let loss = total_loss_node(&mut g, v, vtv, z0_pred, z0v, t, cfg.weights())?;
            let loss = g.scale(loss, 1.0 / batch.len() as f32)?;
            let value = g.value(loss).item();
            Ok((value, g.backward(loss)?))
        })()
        .map_err(|e| non_finite(step, t, e))?;
        total += grads.0;
        grads.1.accumulate_into(model.params_mut())?;
    }
    let (t, prompt) = first.expect("non-empty batch");
    if !total.is_finite() {
        return Err(DenoiserError::NonFinite {
            step,
            t,
            what: "loss".into(),
        });
    }
    model
        .params_mut()
        .adam_step(&cfg.adam())
        .map_err(|e| non_finite(step, t, e.into()))?;
    Ok(StepRecord {
        step,
        t,
        prompt,
        loss: total,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs `cfg.steps` steps drawing batches uniformly from `pairs`; `on_step` sees every record.
pub fn train<C: LatentCodec, R: Rng + ?Sized>(
    model: &mut UNet,
    pairs: &[(Image, Image)],
    cfg: &TrainConfig,
    sched: &NoiseSchedule,
    codec: &C,
    rng: &mut R,
    mut on_step: impl FnMut(&StepRecord) -> Result<(), DenoiserError>,
) -> Result<Vec<f32>, DenoiserError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(DenoiserError::Config("no training pairs".into()));
    }
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<(&Image, &Image)> = (0..cfg.batch_size)
            .map(|_| {
                let (x, y) = &pairs[rng.random_range(0..pairs.len())];
                (x, y)
            })
            .collect();
        let rec = train_step(model, &batch, cfg, sched, codec, rng, step)?;
        losses.push(rec.loss);
        on_step(&rec)?;
    }
    Ok(losses)
}

/// Anything that predicts v from a noisy target and a condition latent.
pub trait VPredictor {
    fn target_channels(&self) -> usize;
    fn predict_v(
        &self,
        z_t: &Tensor,
        z_x: &Tensor,
        t: usize,
        prompt: TaskPrompt,
    ) -> Result<Tensor, DenoiserError>;
}

impl VPredictor for UNet {
    fn target_channels(&self) -> usize {
        self.config().out_channels
    }

    fn predict_v(
        &self,
        z_t: &Tensor,
        z_x: &Tensor,
        t: usize,
        prompt: TaskPrompt,
    ) -> Result<Tensor, DenoiserError> {
        self.forward(z_t, z_x, t, prompt)
    }
}

/// Samples the model's output for `x` under `prompt`; returns the decoded image
/// and the number of denoiser calls.
pub fn generate<M: VPredictor, C: LatentCodec, R: Rng + ?Sized>(
    x: &Image,
    prompt: TaskPrompt,
    model: &M,
    codec: &C,
    plan: &DdimPlan,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<(Image, usize), DenoiserError> {
    let zx = codec.encode(x);
    let (n, _, h, w) = zx.dims4()?;
    let init = Tensor::randn(&[n, model.target_channels(), h, w], 1.0, rng);
    let (z0, calls) = ddim_sample(init, plan, sched, rng, |z, t| {
        model.predict_v(z, &zx, t, prompt)
    })?;
    Ok((codec.decode(&z0)?, calls))
}

pub fn generate_annotation<M: VPredictor, C: LatentCodec, R: Rng + ?Sized>(
    x: &Image,
    model: &M,
    codec: &C,
    plan: &DdimPlan,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Image, DenoiserError> {
    generate(x, TaskPrompt::GenerateY, model, codec, plan, sched, rng).map(|(img, _)| img)
}
