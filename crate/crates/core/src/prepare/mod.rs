//! Training: the dual-loop unlearning-readiness trainer and the baselines.

mod baselines;
mod meta;
mod train;

pub use baselines::{baseline_step, baseline_update, BaselineOutcome};
pub use meta::{
    inner_ascent_step, meta_gradients, ready2unlearn_step, ready2unlearn_update, run_outer_loop,
    MetaBatches, MetaGradients, OuterStep,
};
pub use train::{train, EvalPolicy, Schedule, TrainOptions};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::unlearn::Phase;
use crate::vector::Vector;

/// Scalars of the dual-loop trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaHyper<S> {
    /// Inner (simulated unlearning) ascent rate.
    pub alpha: S,
    /// Outer learning rate; also the SGD rate of every baseline.
    pub eta: S,
    /// Weight of the retain loss after the simulated unlearning step.
    pub lambda1: S,
    /// Weight of the recovery loss after the simulated unlearning step.
    pub lambda2: S,
    /// Weight of the current full-data loss.
    pub lambda3: S,
    /// Step count for [`run_outer_loop`]; [`train`] derives its own from epochs.
    pub outer_steps: usize,
    pub batch_forget: usize,
    pub batch_retain: usize,
    pub batch_recovery: usize,
    pub batch_full: usize,
    pub seed: u64,
}

impl<S: Scalar> Default for MetaHyper<S> {
    fn default() -> Self {
        MetaHyper {
            alpha: S::lit(1e-5),
            eta: S::lit(2e-4),
            lambda1: S::lit(2.0),
            lambda2: S::zero(),
            lambda3: S::lit(4.0),
            outer_steps: 0,
            batch_forget: 32,
            batch_retain: 32,
            batch_recovery: 32,
            batch_full: 32,
            seed: 0,
        }
    }
}

impl<S: Scalar> MetaHyper<S> {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &'static str, v: S| {
            if v.is_finite() && v >= S::zero() {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        finite_nonneg("alpha", self.alpha)?;
        finite_nonneg("lambda1", self.lambda1)?;
        finite_nonneg("lambda2", self.lambda2)?;
        finite_nonneg("lambda3", self.lambda3)?;
        if !(self.eta.is_finite() && self.eta > S::zero()) {
            return Err(Error::param(
                "eta",
                format!("must be finite and > 0, got {}", self.eta),
            ));
        }
        for (name, b) in [
            ("batch_forget", self.batch_forget),
            ("batch_retain", self.batch_retain),
            ("batch_recovery", self.batch_recovery),
            ("batch_full", self.batch_full),
        ] {
            if b == 0 {
                return Err(Error::param(name, "must be >= 1"));
            }
        }
        Ok(())
    }
}

/// The four gradients of one outer step. `g0`–`g2` are taken at the adapted
/// parameters, `g3` at the current ones.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle<S> {
    pub g0: Vector<S>,
    pub g1: Vector<S>,
    pub g2: Option<Vector<S>>,
    pub g3: Vector<S>,
}

/// A training procedure and its distinguishing scalars.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerKind<S> {
    Ready2Unlearn,
    /// Plain SGD on mixed batches.
    Standard,
    /// High-risk per-example losses scaled by `weight`.
    Reweighted {
        weight: S,
    },
    /// High-risk inputs perturbed with N(0, sigma²) noise.
    Noisy {
        sigma: S,
    },
    /// High-risk sub-batch gradient clipped to `clip_norm`.
    Clipped {
        clip_norm: S,
    },
    /// Full data for the first half of the epochs, retain data afterwards.
    Phased,
    /// High-risk targets dropped from the loss with probability `drop_prob`.
    Goldfish {
        drop_prob: S,
    },
    /// Uniform noise of scale `alpha/√(context·embed)` on high-risk embeddings.
    EmbedNoise {
        alpha: S,
    },
    /// Per-example clipping to `clip_norm` plus Gaussian noise of std
    /// `noise_multiplier·clip_norm/batch`.
    DpClipNoise {
        clip_norm: S,
        noise_multiplier: S,
    },
}

impl<S: Scalar> TrainerKind<S> {
    pub fn name(&self) -> &'static str {
        match self {
            TrainerKind::Ready2Unlearn => "ready2unlearn",
            TrainerKind::Standard => "standard",
            TrainerKind::Reweighted { .. } => "reweighted",
            TrainerKind::Noisy { .. } => "noisy",
            TrainerKind::Clipped { .. } => "clipped",
            TrainerKind::Phased => "phased",
            TrainerKind::Goldfish { .. } => "goldfish",
            TrainerKind::EmbedNoise { .. } => "embed_noise",
            TrainerKind::DpClipNoise { .. } => "dp_clip_noise",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: S| {
            if v.is_finite() && v >= S::zero() {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        let norm = |name: &'static str, v: S| {
            if !v.is_nan() && v > S::zero() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be > 0, got {v}")))
            }
        };
        match *self {
            TrainerKind::Ready2Unlearn | TrainerKind::Standard | TrainerKind::Phased => Ok(()),
            TrainerKind::Reweighted { weight } => nonneg("weight", weight),
            TrainerKind::Noisy { sigma } => nonneg("sigma", sigma),
            TrainerKind::Clipped { clip_norm } => norm("clip_norm", clip_norm),
            TrainerKind::Goldfish { drop_prob } => {
                if (S::zero()..=S::one()).contains(&drop_prob) {
                    Ok(())
                } else {
                    Err(Error::param(
                        "drop_prob",
                        format!("must lie in [0, 1], got {drop_prob}"),
                    ))
                }
            }
            TrainerKind::EmbedNoise { alpha } => nonneg("alpha", alpha),
            TrainerKind::DpClipNoise {
                clip_norm,
                noise_multiplier,
            } => {
                norm("clip_norm", clip_norm)?;
                nonneg("noise_multiplier", noise_multiplier)?;
                if noise_multiplier > S::zero() && clip_norm.is_infinite() {
                    return Err(Error::param(
                        "clip_norm",
                        "noise needs a finite clipping norm",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Where a training step is within its run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepContext {
    /// Zero-based epoch.
    pub epoch: usize,
    pub total_epochs: usize,
}

/// Independent streams for batch sampling and for injected noise, so that
/// noise draws never shift which examples are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRngs {
    pub data: SeededRng,
    pub noise: SeededRng,
}

impl TrainRngs {
    pub fn split(rng: &mut SeededRng) -> Self {
        TrainRngs {
            data: rng.fork(),
            noise: rng.fork(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRow<S> {
    /// One-based global step.
    pub step: usize,
    /// Zero-based epoch.
    pub epoch: usize,
    pub phase: Phase,
    pub trainer: &'static str,
    /// Loss on the step's full-data batch, before the update.
    pub full_loss: Option<S>,
    /// Number of high-risk examples in the step's full-data batch.
    pub high_risk_seen: usize,
    /// Whole-set measurements after the update, on evaluation steps only.
    pub forget_loss: Option<S>,
    pub retain_loss: Option<S>,
    pub forget_acc: Option<S>,
    pub retain_acc: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainEvent {
    Skipped { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog<S> {
    pub rows: Vec<TrainRow<S>>,
    pub events: Vec<TrainEvent>,
}

#[cfg(test)]
mod tests;
