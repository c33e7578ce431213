use std::path::Path;

use paintdet::codec::{make_palette, AnnotationStyle, Palette};
use paintdet::data::SceneSpec;
use paintdet::denoiser::{TrainConfig, UNetConfig};
use paintdet::diffusion::{
    DdimPlan, NoiseSchedule, ScheduleSpec, BETA_END, BETA_START, DEFAULT_SAMPLING_STEPS,
    DEFAULT_TRAIN_STEPS,
};
use paintdet::postproc::DetectConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run needs; every section and field has a default, unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: SceneSpec,
    pub codec: CodecConfig,
    pub diffusion: DiffusionConfig,
    pub train: TrainConfig,
    pub model: UNetConfig,
    pub postproc: DetectConfig,
    pub eval: EvalConfig,
    /// Seeds DDIM sampling in `infer`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    /// Palette size K; must cover the dataset's classes.
    pub classes: usize,
    pub style: AnnotationStyle,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            style: AnnotationStyle::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    #[serde(rename = "T")]
    pub train_steps: usize,
    #[serde(rename = "S")]
    pub sampling_steps: usize,
    pub eta: f64,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            train_steps: DEFAULT_TRAIN_STEPS,
            sampling_steps: DEFAULT_SAMPLING_STEPS,
            eta: 0.0,
            beta_start: BETA_START,
            beta_end: BETA_END,
        }
    }
}

impl DiffusionConfig {
    pub fn build(&self) -> Result<(NoiseSchedule, DdimPlan), CliError> {
        ScheduleSpec {
            train_steps: self.train_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            sampling_steps: self.sampling_steps,
            eta: self.eta,
        }
        .build()
        .map_err(|e| CliError::Usage(format!("diffusion: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Extra single-threshold AP values reported next to the COCO summary.
    pub extra_iou: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            extra_iou: vec![0.9],
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage =
            |section: &str, e: &dyn std::fmt::Display| CliError::Usage(format!("{section}: {e}"));
        self.data.validate().map_err(|e| usage("data", &e))?;
        self.codec
            .style
            .validate()
            .map_err(|e| usage("codec", &e))?;
        let palette = make_palette(self.codec.classes).map_err(|e| usage("codec", &e))?;
        if palette.len() < self.data.classes {
            return Err(usage(
                "codec",
                &format!(
                    "{} colors cannot cover {} data classes",
                    palette.len(),
                    self.data.classes
                ),
            ));
        }
        self.diffusion.build()?;
        self.train.validate().map_err(|e| usage("train", &e))?;
        self.model.validate().map_err(|e| usage("model", &e))?;
        self.postproc
            .validate()
            .map_err(|e| usage("postproc", &e))?;
        if let Some(t) = self
            .eval
            .extra_iou
            .iter()
            .find(|t| !(0.0..=1.0).contains(*t))
        {
            return Err(usage("eval", &format!("IoU threshold {t} outside [0, 1]")));
        }
        Ok(())
    }

    /// Palette named after the dataset's classes.
    pub fn palette(&self, class_names: &[String]) -> Result<Palette, CliError> {
        if class_names.len() > self.codec.classes {
            return Err(CliError::Usage(format!(
                "dataset has {} classes but the palette has {}",
                class_names.len(),
                self.codec.classes
            )));
        }
        let mut names: Vec<String> = class_names.to_vec();
        names.extend((names.len()..self.codec.classes).map(|i| format!("class_{i}")));
        make_palette(self.codec.classes)
            .and_then(|p| p.with_names(&names))
            .map_err(|e| CliError::Usage(format!("codec: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.diffusion.train_steps, 1000);
        assert_eq!(cfg.diffusion.sampling_steps, 50);
        assert_eq!(cfg.codec.style.shrink_ratio, 1.0 / 3.0);
        assert_eq!(cfg.train.lambda2, 0.1);
    }

    #[test]
    fn unknown_keys_are_named() {
        for doc in [
            r#"{"bogus": 1}"#,
            r#"{"train": {"lr": 1e-4, "bogus_rate": 2}}"#,
        ] {
            let err = serde_json::from_str::<RunConfig>(doc)
                .unwrap_err()
                .to_string();
            assert!(err.contains("bogus"), "{err}");
        }
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let text = serde_json::to_string(&RunConfig::default()).unwrap();
        assert_eq!(
            serde_json::from_str::<RunConfig>(&text).unwrap(),
            RunConfig::default()
        );
        assert!(text.contains("\"T\":1000"));
    }

    #[test]
    fn palette_must_cover_classes() {
        let cfg = RunConfig {
            codec: CodecConfig {
                classes: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let names: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        assert!(RunConfig::default().palette(&names).is_ok());
    }
}
