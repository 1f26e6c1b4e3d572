//! Experiment configuration: a single JSON document.
//!
//! Optional sections are filled by [`ExperimentConfig::resolve`]; the resolved
//! form is what a run echoes next to its artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unlearn_prep::prepare::{MetaHyper, TrainerKind};
use unlearn_prep::unlearn::{BatchMode, Plateau, RecoverConfig, StopRule, UnlearnConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ClassWise,
    RandomData,
    Resistance,
    DurationSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
    SynthBlobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
    },
    Corpus {
        path: PathBuf,
        /// Fractions of windows for forget, recovery and recovery fine-tuning.
        #[serde(default = "default_fractions")]
        fractions: [f64; 3],
    },
    StyledCorpus {
        #[serde(default = "default_lines")]
        lines: usize,
    },
}

fn default_fractions() -> [f64; 3] {
    [0.2, 0.2, 0.2]
}

fn default_lines() -> usize {
    40
}

impl DataConfig {
    pub fn is_text(&self) -> bool {
        matches!(
            self,
            DataConfig::Corpus { .. } | DataConfig::StyledCorpus { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden widths: any number for the classifier, exactly one for the LM.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub context: Option<usize>,
    #[serde(default)]
    pub embed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum TrainerConfig {
    #[default]
    Ready2unlearn,
    Standard,
    Reweighted {
        #[serde(default = "half")]
        weight: f64,
    },
    Noisy {
        #[serde(default = "noise_sigma")]
        sigma: f64,
    },
    Clipped {
        #[serde(default = "one")]
        clip_norm: f64,
    },
    Phased,
    Goldfish {
        #[serde(default = "quarter")]
        drop_prob: f64,
    },
    EmbedNoise {
        #[serde(default = "five")]
        alpha: f64,
    },
    DpClipNoise {
        #[serde(default = "tenth")]
        clip_norm: f64,
        #[serde(default = "one")]
        noise_multiplier: f64,
    },
}

fn half() -> f64 {
    0.5
}
fn noise_sigma() -> f64 {
    0.3
}
fn one() -> f64 {
    1.0
}
fn quarter() -> f64 {
    0.25
}
fn five() -> f64 {
    5.0
}
fn tenth() -> f64 {
    0.1
}

impl TrainerConfig {
    pub fn kind(&self) -> TrainerKind<f64> {
        match *self {
            TrainerConfig::Ready2unlearn => TrainerKind::Ready2Unlearn,
            TrainerConfig::Standard => TrainerKind::Standard,
            TrainerConfig::Reweighted { weight } => TrainerKind::Reweighted { weight },
            TrainerConfig::Noisy { sigma } => TrainerKind::Noisy { sigma },
            TrainerConfig::Clipped { clip_norm } => TrainerKind::Clipped { clip_norm },
            TrainerConfig::Phased => TrainerKind::Phased,
            TrainerConfig::Goldfish { drop_prob } => TrainerKind::Goldfish { drop_prob },
            TrainerConfig::EmbedNoise { alpha } => TrainerKind::EmbedNoise { alpha },
            TrainerConfig::DpClipNoise {
                clip_norm,
                noise_multiplier,
            } => TrainerKind::DpClipNoise {
                clip_norm,
                noise_multiplier,
            },
        }
    }
}

/// Dual-loop scalars. The five rates and weights have no defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub alpha: f64,
    pub eta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    #[serde(default = "batch32")]
    pub batch_forget: usize,
    #[serde(default = "batch32")]
    pub batch_retain: usize,
    #[serde(default = "batch32")]
    pub batch_recovery: usize,
    #[serde(default = "batch32")]
    pub batch_full: usize,
}

fn batch32() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopConfig {
    ForgetAccAtMost(f64),
    ForgetLossAtLeast(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchConfig {
    FullForgetSet,
    Minibatch(usize),
}

impl From<BatchConfig> for BatchMode {
    fn from(b: BatchConfig) -> Self {
        match b {
            BatchConfig::FullForgetSet => BatchMode::FullForgetSet,
            BatchConfig::Minibatch(n) => BatchMode::Minibatch(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnSection {
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub stop: Option<StopConfig>,
    #[serde(default)]
    pub batch: Option<BatchConfig>,
    /// Retain accuracy is recorded every this many unlearning steps, and at
    /// the first step whose forget accuracy is at chance level.
    #[serde(default)]
    pub retain_eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub batch: Option<BatchConfig>,
    #[serde(default)]
    pub plateau_window: Option<usize>,
    #[serde(default)]
    pub plateau_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub prepared_epochs: Option<Vec<usize>>,
    /// Forget-accuracy level whose first crossing is counted.
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Train with Standard for `epochs − M` epochs, then with the configured
    /// trainer for the final `M`. Absent: the trainer runs every epoch.
    #[serde(default)]
    pub prepared_epochs: Option<usize>,
    /// Whole-set measurements during training every this many steps, in
    /// addition to epoch ends.
    #[serde(default)]
    pub train_eval_every: Option<usize>,
    pub meta: MetaConfig,
    #[serde(default)]
    pub unlearn: UnlearnSection,
    #[serde(default)]
    pub recovery: RecoverySection,
    /// Forget classes for class-wise runs; all classes when absent.
    #[serde(default)]
    pub classes: Option<Vec<usize>>,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Output directory; not echoed, so artifacts do not depend on it.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

fn default_epochs() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            // Surface the offending field name for missing or unknown fields.
            let msg = e.to_string();
            match msg.split('`').nth(1) {
                Some(field)
                    if msg.starts_with("missing field") || msg.starts_with("unknown field") =>
                {
                    CliError::config(field, msg.clone())
                }
                _ => CliError::Parse(e),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn is_language_model(&self) -> bool {
        self.data.is_text()
    }

    /// Fills every defaulted field and validates the result. Class indices
    /// are checked later, once the dataset is loaded.
    pub fn resolve(mut self) -> Result<Self> {
        let lm = self.is_language_model();
        let m = &mut self.model;
        if lm {
            m.hidden.get_or_insert_with(|| vec![128]);
            m.context.get_or_insert(16);
            m.embed.get_or_insert(32);
        } else {
            m.hidden.get_or_insert_with(|| vec![256]);
        }
        let u = &mut self.unlearn;
        u.rate.get_or_insert(if lm { 1e-6 } else { 1e-5 });
        u.max_steps.get_or_insert(if lm { 500 } else { 100_000 });
        u.batch.get_or_insert(if lm {
            BatchConfig::Minibatch(32)
        } else {
            BatchConfig::FullForgetSet
        });
        u.retain_eval_every.get_or_insert(100);
        if u.stop.is_none() {
            // Class-wise chance level is filled once the class count is known.
            if lm {
                u.stop = Some(StopConfig::None);
            }
        }
        let r = &mut self.recovery;
        r.rate.get_or_insert(0.05);
        r.max_steps.get_or_insert(2_000);
        r.batch.get_or_insert(BatchConfig::Minibatch(32));
        r.plateau_window.get_or_insert(20);
        r.plateau_tolerance.get_or_insert(1e-3);
        if self.task == Task::DurationSweep {
            self.sweep
                .prepared_epochs
                .get_or_insert_with(|| (1..=10).map(|i| 2 * i).collect());
            self.sweep.threshold.get_or_insert(0.5);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(CliError::config(field, reason));
        match &self.data {
            DataConfig::Idx {
                images,
                labels,
                limit,
            } => {
                for (field, p) in [("data.images", images), ("data.labels", labels)] {
                    if !p.exists() {
                        return bad(field, format!("{} does not exist", p.display()));
                    }
                }
                if *limit == Some(0) {
                    return bad("data.limit", "must be >= 1".into());
                }
            }
            DataConfig::SynthBlobs {
                classes,
                per_class,
                dim,
                separation,
            } => {
                if *classes < 2 || *per_class == 0 || *dim == 0 {
                    return bad(
                        "data",
                        "synth_blobs needs classes >= 2, per_class >= 1, dim >= 1".into(),
                    );
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return bad(
                        "data.separation",
                        format!("must be finite and >= 0, got {separation}"),
                    );
                }
            }
            DataConfig::Corpus { path, fractions } => {
                if !path.exists() {
                    return bad("data.path", format!("{} does not exist", path.display()));
                }
                if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
                    || fractions.iter().sum::<f64>() > 1.0
                {
                    return bad("data.fractions", "each in [0, 1] with sum <= 1".into());
                }
            }
            DataConfig::StyledCorpus { lines } => {
                if *lines == 0 {
                    return bad("data.lines", "must be >= 1".into());
                }
            }
        }
        let lm = self.is_language_model();
        match self.task {
            Task::ClassWise | Task::DurationSweep if lm => {
                return bad(
                    "task",
                    "class-wise tasks need labelled dense data (idx or synth_blobs)".into(),
                );
            }
            Task::Resistance if !lm => {
                return bad(
                    "task",
                    "resistance runs need a text source (corpus or styled_corpus)".into(),
                );
            }
            _ => {}
        }
        let hidden = self.model.hidden.as_deref().unwrap_or(&[]);
        if hidden.contains(&0) {
            return bad("model.hidden", "widths must be >= 1".into());
        }
        if lm && hidden.len() != 1 {
            return bad(
                "model.hidden",
                "the language model has exactly one hidden layer".into(),
            );
        }
        if lm && (self.model.context == Some(0) || self.model.embed == Some(0)) {
            return bad("model", "context and embed must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1".into());
        }
        if let Some(m) = self.prepared_epochs {
            if m > self.epochs {
                return bad(
                    "prepared_epochs",
                    format!("{m} exceeds epochs = {}", self.epochs),
                );
            }
        }
        if self.train_eval_every == Some(0) {
            return bad("train_eval_every", "must be >= 1".into());
        }
        let kind = self.trainer.kind();
        kind.validate()
            .map_err(|e| CliError::config("trainer", e.to_string()))?;
        match kind {
            TrainerKind::Noisy { .. } if lm => {
                return bad("trainer", "input noise needs dense inputs".into())
            }
            TrainerKind::EmbedNoise { .. } if !lm => {
                return bad("trainer", "embedding noise needs the language model".into())
            }
            _ => {}
        }
        self.meta_hyper(0)
            .validate()
            .map_err(|e| CliError::config(format!("meta.{}", param_name(&e)), e.to_string()))?;
        if let Some(cfg) = self.unlearn_config(2) {
            cfg.validate().map_err(|e| {
                CliError::config(format!("unlearn.{}", param_name(&e)), e.to_string())
            })?;
        }
        if self.unlearn.retain_eval_every == Some(0) {
            return bad("unlearn.retain_eval_every", "must be >= 1".into());
        }
        let rc = self.recover_config();
        if !(rc.rate.is_finite() && rc.rate > 0.0) {
            return bad(
                "recovery.rate",
                format!("must be finite and > 0, got {}", rc.rate),
            );
        }
        if let BatchMode::Minibatch(0) = rc.batch {
            return bad("recovery.batch", "minibatch size must be >= 1".into());
        }
        if let Some(pl) = rc.plateau {
            if pl.window == 0 || !(pl.tolerance.is_finite() && pl.tolerance >= 0.0) {
                return bad(
                    "recovery.plateau_window",
                    "window >= 1 and finite tolerance >= 0".into(),
                );
            }
        }
        if let Some(ms) = &self.sweep.prepared_epochs {
            if ms.is_empty() {
                return bad(
                    "sweep.prepared_epochs",
                    "must list at least one value".into(),
                );
            }
            if let Some(&m) = ms.iter().find(|&&m| m > self.epochs) {
                return bad(
                    "sweep.prepared_epochs",
                    format!("{m} exceeds epochs = {}", self.epochs),
                );
            }
        }
        if let Some(t) = self.sweep.threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad("sweep.threshold", format!("must lie in [0, 1], got {t}"));
            }
        }
        Ok(())
    }

    pub fn meta_hyper(&self, seed: u64) -> MetaHyper<f64> {
        let m = &self.meta;
        MetaHyper {
            alpha: m.alpha,
            eta: m.eta,
            lambda1: m.lambda1,
            lambda2: m.lambda2,
            lambda3: m.lambda3,
            outer_steps: 0,
            batch_forget: m.batch_forget,
            batch_retain: m.batch_retain,
            batch_recovery: m.batch_recovery,
            batch_full: m.batch_full,
            seed,
        }
    }

    /// Unlearning settings; an unset stop rule becomes chance accuracy,
    /// `1/classes`. `None` before [`resolve`](Self::resolve).
    pub fn unlearn_config(&self, classes: usize) -> Option<UnlearnConfig<f64>> {
        let u = &self.unlearn;
        let stop = match u.stop {
            Some(StopConfig::ForgetAccAtMost(t)) => StopRule::ForgetAccAtMost(t),
            Some(StopConfig::ForgetLossAtLeast(t)) => StopRule::ForgetLossAtLeast(t),
            Some(StopConfig::None) => StopRule::None,
            None => StopRule::ForgetAccAtMost(1.0 / classes as f64),
        };
        Some(UnlearnConfig {
            rate: u.rate?,
            max_steps: u.max_steps?,
            stop,
            batch: u.batch?.into(),
        })
    }

    pub fn recover_config(&self) -> RecoverConfig<f64> {
        let r = &self.recovery;
        RecoverConfig {
            rate: r.rate.unwrap_or(0.05),
            max_steps: r.max_steps.unwrap_or(2_000),
            batch: r.batch.unwrap_or(BatchConfig::Minibatch(32)).into(),
            plateau: Some(Plateau {
                window: r.plateau_window.unwrap_or(20),
                tolerance: r.plateau_tolerance.unwrap_or(1e-3),
            }),
        }
    }
}

fn param_name(e: &unlearn_prep::Error) -> &'static str {
    match e {
        unlearn_prep::Error::Parameter { name, .. } => name,
        _ => "value",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "task": "class_wise",
        "data": {"source": "synth_blobs", "classes": 3, "per_class": 10, "dim": 4, "separation": 3.0},
        "meta": {"alpha": 1e-5, "eta": 2e-4, "lambda1": 2, "lambda2": 0, "lambda3": 4}
    }"#;

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.meta.batch_full, 32);
        assert_eq!(cfg.model.hidden, Some(vec![256]));
        assert_eq!(cfg.unlearn.rate, Some(1e-5));
        assert_eq!(cfg.trainer, TrainerConfig::Ready2unlearn);
        let u = cfg.unlearn_config(10).unwrap();
        assert_eq!(u.stop, StopRule::ForgetAccAtMost(0.1));
        let echo = cfg.to_json();
        let again = ExperimentConfig::from_json(&echo)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn missing_lambda1_is_named() {
        let text = MINIMAL.replace("\"lambda1\": 2, ", "");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(
            matches!(&err, CliError::Config { field, .. } if field == "lambda1"),
            "{err}"
        );
        assert!(err.to_string().contains("lambda1"));
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("\"task\"", "\"epochz\": 3, \"task\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("epochz"));
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let base = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut c = base.clone();
        c.meta.eta = 0.0;
        assert!(c.resolve().unwrap_err().to_string().contains("meta.eta"));
        let mut c = base.clone();
        c.prepared_epochs = Some(21);
        assert!(c
            .resolve()
            .unwrap_err()
            .to_string()
            .contains("prepared_epochs"));
        let mut c = base.clone();
        c.trainer = TrainerConfig::Goldfish { drop_prob: 2.0 };
        assert!(c.resolve().is_err());
        let mut c = base.clone();
        c.trainer = TrainerConfig::EmbedNoise { alpha: 5.0 };
        assert!(c.resolve().is_err());
        let mut c = base;
        c.task = Task::DurationSweep;
        c.sweep.prepared_epochs = Some(vec![2, 22]);
        assert!(c
            .resolve()
            .unwrap_err()
            .to_string()
            .contains("sweep.prepared_epochs"));
    }

    #[test]
    fn trainer_scalar_defaults() {
        let t: TrainerConfig = serde_json::from_str(r#"{"kind": "dp_clip_noise"}"#).unwrap();
        assert_eq!(
            t,
            TrainerConfig::DpClipNoise {
                clip_norm: 0.1,
                noise_multiplier: 1.0
            }
        );
        let t: TrainerConfig = serde_json::from_str(r#"{"kind": "goldfish"}"#).unwrap();
        assert_eq!(t.kind(), TrainerKind::Goldfish { drop_prob: 0.25 });
        let t: TrainerConfig = serde_json::from_str(r#"{"kind": "embed_noise"}"#).unwrap();
        assert_eq!(t.kind(), TrainerKind::EmbedNoise { alpha: 5.0 });
    }

    #[test]
    fn sweep_defaults_to_ten_settings() {
        let text = MINIMAL.replace("class_wise", "duration_sweep");
        let cfg = ExperimentConfig::from_json(&text)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(
            cfg.sweep.prepared_epochs,
            Some(vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20])
        );
    }

    #[test]
    fn missing_paths_fail_validation() {
        let text = r#"{"task": "random_data",
            "data": {"source": "corpus", "path": "/definitely/missing.txt"},
            "meta": {"alpha": 1e-5, "eta": 2e-4, "lambda1": 2, "lambda2": 0, "lambda3": 4}}"#;
        let err = ExperimentConfig::from_json(text)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().contains("data.path"));
    }
}
