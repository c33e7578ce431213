//! Forward noising, the v-parameterization and the DDIM update.

use rand::Rng;

use crate::nn::Tensor;

use super::{DdimPlan, DiffusionError, NoiseSchedule};

fn coeffs(sched: &NoiseSchedule, t: usize) -> Result<(f32, f32), DiffusionError> {
    sched.check_timestep(t)?;
    let ab = sched.alpha_bar(t);
    Ok((ab.sqrt() as f32, (1.0 - ab).sqrt() as f32))
}

/// `z_t = sqrt(ᾱ_t)·z0 + sqrt(1−ᾱ_t)·ε`. `t = 0` returns `z0`.
pub fn forward_diffuse(
    z0: &Tensor,
    t: usize,
    eps: &Tensor,
    sched: &NoiseSchedule,
) -> Result<Tensor, DiffusionError> {
    let (a, s) = coeffs(sched, t)?;
    Ok(z0.lincomb(a, eps, s)?)
}

/// `v = sqrt(ᾱ_t)·ε − sqrt(1−ᾱ_t)·z0`.
pub fn v_target(
    z0: &Tensor,
    eps: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Tensor, DiffusionError> {
    let (a, s) = coeffs(sched, t)?;
    Ok(eps.lincomb(a, z0, -s)?)
}

/// `ẑ0 = sqrt(ᾱ_t)·z_t − sqrt(1−ᾱ_t)·v`.
pub fn predict_z0_from_v(
    z_t: &Tensor,
    v: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Tensor, DiffusionError> {
    let (a, s) = coeffs(sched, t)?;
    Ok(z_t.lincomb(a, v, -s)?)
}

/// `ε̂ = sqrt(1−ᾱ_t)·z_t + sqrt(ᾱ_t)·v`.
pub fn predict_eps_from_v(
    z_t: &Tensor,
    v: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Tensor, DiffusionError> {
    let (a, s) = coeffs(sched, t)?;
    Ok(z_t.lincomb(s, v, a)?)
}

/// One DDIM transition `z_τ → z_τprev` from a v prediction.
///
/// `σ_τ = η·sqrt((1−ᾱ_prev)/(1−ᾱ_τ))·sqrt(1−ᾱ_τ/ᾱ_prev)`; the output is
/// `sqrt(ᾱ_prev)·ẑ0 + sqrt(1−ᾱ_prev−σ²)·ε̂ + σ·ε_new`. Fresh noise is only
/// drawn when `σ > 0`, so `η = 0` never touches `rng`.
pub fn ddim_step<R: Rng + ?Sized>(
    z_tau: &Tensor,
    v_pred: &Tensor,
    tau: usize,
    tau_prev: usize,
    plan: &DdimPlan,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Tensor, DiffusionError> {
    if tau_prev >= tau {
        return Err(DiffusionError::Timestep {
            t: tau_prev,
            max: tau.saturating_sub(1),
        });
    }
    sched.check_timestep(tau)?;
    let ab_t = sched.alpha_bar(tau);
    let ab_p = sched.alpha_bar(tau_prev);
    let z0_hat = predict_z0_from_v(z_tau, v_pred, tau, sched)?;
    let eps_hat = predict_eps_from_v(z_tau, v_pred, tau, sched)?;
    let sigma = plan.eta() * ((1.0 - ab_p) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_p).sqrt();
    let dir_var = 1.0 - ab_p - sigma * sigma;
    if dir_var < -1e-12 {
        return Err(DiffusionError::Eta(format!(
            "eta {} gives σ² = {} above 1 − ᾱ_prev = {}",
            plan.eta(),
            sigma * sigma,
            1.0 - ab_p
        )));
    }
    let mut out = z0_hat.lincomb(ab_p.sqrt() as f32, &eps_hat, dir_var.max(0.0).sqrt() as f32)?;
    if sigma > 0.0 {
        let noise = Tensor::randn(z_tau.shape(), 1.0, rng);
        out.add_assign(&noise.scale(sigma as f32))?;
    }
    Ok(out)
}

/// Runs the full DDIM loop from `z_T`, asking `predict_v(z_τ, τ)` for each step.
/// Returns the final latent and the number of denoiser calls.
pub fn ddim_sample<R, F, E>(
    z_init: Tensor,
    plan: &DdimPlan,
    sched: &NoiseSchedule,
    rng: &mut R,
    mut predict_v: F,
) -> Result<(Tensor, usize), E>
where
    R: Rng + ?Sized,
    F: FnMut(&Tensor, usize) -> Result<Tensor, E>,
    E: From<DiffusionError>,
{
    let mut z = z_init;
    let mut calls = 0;
    for (tau, prev) in plan.steps() {
        let v = predict_v(&z, tau)?;
        calls += 1;
        z = ddim_step(&z, &v, tau, prev, plan, sched, rng)?;
    }
    Ok((z, calls))
}
