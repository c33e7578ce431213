use serde::{Deserialize, Serialize};

use super::DiffusionError;

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_SAMPLING_STEPS: usize = 50;
pub const BETA_START: f64 = 0.00085;
pub const BETA_END: f64 = 0.012;

/// Scaled-linear β schedule and its running products.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    beta_start: f64,
    beta_end: f64,
}

/// Serializable description of a schedule and sampling plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(rename = "S")]
    pub sampling_steps: usize,
    pub eta: f64,
}

/// `sqrt(β_t)` linear from `sqrt(0.00085)` to `sqrt(0.012)` over `t = 1..=T`.
pub fn make_schedule(train_steps: usize) -> Result<NoiseSchedule, DiffusionError> {
    NoiseSchedule::scaled_linear(train_steps, BETA_START, BETA_END)
}

impl NoiseSchedule {
    pub fn scaled_linear(
        train_steps: usize,
        beta_start: f64,
        beta_end: f64,
    ) -> Result<Self, DiffusionError> {
        if train_steps < 2 {
            return Err(DiffusionError::Schedule(format!(
                "need T >= 2, got {train_steps}"
            )));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(DiffusionError::Schedule(format!(
                "beta endpoints must satisfy 0 < {beta_start} <= {beta_end} < 1"
            )));
        }
        let (s0, s1) = (beta_start.sqrt(), beta_end.sqrt());
        let last = (train_steps - 1) as f64;
        let mut betas: Vec<f64> = (0..train_steps)
            .map(|i| {
                let s = s0 + (s1 - s0) * i as f64 / last;
                s * s
            })
            .collect();
        betas[0] = beta_start;
        betas[train_steps - 1] = beta_end;
        let mut alpha_bars = Vec::with_capacity(train_steps + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self {
            betas,
            alpha_bars,
            beta_start,
            beta_end,
        })
    }

    /// Number of training steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// `β_t` for `t ∈ 1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t` for `t ∈ 0..=T`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_timestep(&self, t: usize) -> Result<(), DiffusionError> {
        if t > self.len() {
            return Err(DiffusionError::Timestep { t, max: self.len() });
        }
        Ok(())
    }

    pub fn spec(&self, plan: &DdimPlan) -> ScheduleSpec {
        ScheduleSpec {
            train_steps: self.len(),
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            sampling_steps: plan.taus().len(),
            eta: plan.eta(),
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<(NoiseSchedule, DdimPlan), DiffusionError> {
        let sched = NoiseSchedule::scaled_linear(self.train_steps, self.beta_start, self.beta_end)?;
        let plan = DdimPlan::new(self.train_steps, self.sampling_steps, self.eta)?;
        Ok((sched, plan))
    }
}

/// Re-spaced timestep subset for DDIM sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DdimPlan {
    taus: Vec<usize>,
    eta: f64,
}

impl DdimPlan {
    /// `τ_i = round(i·T/S)` for `i = 1..=S`, deduplicated; always ends at `T`.
    pub fn new(
        train_steps: usize,
        sampling_steps: usize,
        eta: f64,
    ) -> Result<Self, DiffusionError> {
        if sampling_steps == 0 || train_steps == 0 {
            return Err(DiffusionError::Schedule(
                "sampling plan needs S >= 1 and T >= 1".into(),
            ));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(DiffusionError::Eta(format!(
                "eta must be a finite non-negative number, got {eta}"
            )));
        }
        let mut taus: Vec<usize> = (1..=sampling_steps)
            .map(|i| ((i * train_steps) as f64 / sampling_steps as f64).round() as usize)
            .filter(|&t| t >= 1)
            .collect();
        taus.dedup();
        Ok(Self { taus, eta })
    }

    pub fn taus(&self) -> &[usize] {
        &self.taus
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `(τ, τ_prev)` pairs in sampling order, from `T` down to a final step into 0.
    pub fn steps(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.taus.len());
        for k in (0..self.taus.len()).rev() {
            let prev = if k == 0 { 0 } else { self.taus[k - 1] };
            out.push((self.taus[k], prev));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_product() {
        let s = make_schedule(1000).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert_eq!(s.beta(1), 0.00085);
        assert_eq!(s.beta(1000), 0.012);
        // Independent evaluation of the running product.
        let mut prod = 1.0f64;
        for t in 1..=1000 {
            let sq =
                0.00085f64.sqrt() + (0.012f64.sqrt() - 0.00085f64.sqrt()) * (t - 1) as f64 / 999.0;
            prod *= 1.0 - sq * sq;
        }
        assert!((s.alpha_bar(1000) - prod).abs() < 1e-12);
        assert!(s.alpha_bar(1000) < 0.01, "{}", s.alpha_bar(1000));
    }

    #[test]
    fn alpha_bars_strictly_decrease() {
        for t in [2, 10, 1000] {
            let s = make_schedule(t).unwrap();
            for w in s.alpha_bars().windows(2) {
                assert!(w[1] < w[0] && w[1].is_finite());
            }
            for k in 1..=t {
                assert!(s.beta(k) > 0.0 && s.beta(k) < 1.0);
            }
        }
    }

    #[test]
    fn tiny_schedule_rejected() {
        assert!(make_schedule(1).is_err());
    }

    #[test]
    fn fifty_step_plan() {
        let p = DdimPlan::new(1000, 50, 0.0).unwrap();
        assert_eq!(p.taus().len(), 50);
        assert_eq!(p.taus()[0], 20);
        assert_eq!(*p.taus().last().unwrap(), 1000);
        let steps = p.steps();
        assert_eq!(steps.len(), 50);
        assert_eq!(steps[0], (1000, 980));
        assert_eq!(*steps.last().unwrap(), (20, 0));
    }

    #[test]
    fn plan_dedups_and_keeps_t() {
        let p = DdimPlan::new(3, 5, 0.0).unwrap();
        assert_eq!(p.taus(), &[1, 2, 3]);
        assert_eq!(DdimPlan::new(1000, 1, 0.0).unwrap().taus(), &[1000]);
        assert_eq!(
            DdimPlan::new(1000, 3, 0.0).unwrap().taus(),
            &[333, 667, 1000]
        );
    }

    #[test]
    fn spec_round_trip_json() {
        let s = make_schedule(1000).unwrap();
        let p = DdimPlan::new(1000, 50, 0.0).unwrap();
        let json = serde_json::to_string(&s.spec(&p)).unwrap();
        assert!(json.contains("\"T\":1000") && json.contains("\"S\":50"));
        let back: ScheduleSpec = serde_json::from_str(&json).unwrap();
        let (s2, p2) = back.build().unwrap();
        assert_eq!((s2, p2), (s, p));
    }
}
