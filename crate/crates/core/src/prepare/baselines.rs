//! Single-objective baselines. Each one is a weighted full-batch gradient
//! step; the weights and input perturbations are what set them apart.

use crate::data::{ExampleSource, RiskPartition};
use crate::error::{Error, Result};
use crate::models::{
    grad, loss_and_grad, Batch, Inputs, LossOptions, ModelSpec, ParamState, RiskTag,
};
use crate::prepare::{MetaHyper, StepContext, TrainRngs, TrainerKind};
use crate::rng::{gaussian, uniform, SeededRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome<S> {
    pub params: ParamState<S>,
    /// Weighted batch loss before the update; `None` when the step was skipped.
    pub loss: Option<S>,
    /// Set when no example contributed to the loss; parameters are unchanged.
    pub skipped: Option<String>,
}

fn high_risk(batch: &Batch<impl Scalar>) -> Vec<usize> {
    (0..batch.len())
        .filter(|&i| batch.tags[i] == RiskTag::HighRisk)
        .collect()
}

/// Applies one SGD step of `kind` at rate `h.eta` on `batch`. Noise is drawn
/// from `noise_rng` only.
pub fn baseline_update<S: Scalar>(
    kind: &TrainerKind<S>,
    p: &ParamState<S>,
    batch: &Batch<S>,
    h: &MetaHyper<S>,
    noise_rng: &mut SeededRng,
) -> Result<BaselineOutcome<S>> {
    kind.validate()?;
    let n = batch.len();
    let mut weights = vec![S::one(); n];
    let mut denom = S::lit(n as f64);
    let mut perturbed: Option<Batch<S>> = None;
    let mut embed_noise: Option<Vec<S>> = None;
    let mut dp_noise = None;

    match *kind {
        TrainerKind::Ready2Unlearn => {
            return Err(Error::param(
                "trainer",
                "the dual-loop trainer is not a baseline",
            ));
        }
        TrainerKind::Standard | TrainerKind::Phased => {}
        TrainerKind::Reweighted { weight } => {
            for i in high_risk(batch) {
                weights[i] = weight;
            }
        }
        TrainerKind::Noisy { sigma } => {
            let mut b = batch.clone();
            let Inputs::Dense { dim, values } = &mut b.inputs else {
                return Err(Error::ModelKind {
                    model: p.spec().kind_name(),
                    op: "input noise",
                });
            };
            let dim = *dim;
            for i in high_risk(batch) {
                let noise = gaussian(noise_rng, dim, sigma)?;
                for (v, e) in values[i * dim..(i + 1) * dim].iter_mut().zip(noise.iter()) {
                    *v += *e;
                }
            }
            perturbed = Some(b);
        }
        TrainerKind::Clipped { clip_norm } => {
            let idx = high_risk(batch);
            if !idx.is_empty() {
                let norm = grad(p, &batch.select(&idx))?.l2_norm();
                if norm > clip_norm {
                    let scale = clip_norm / norm;
                    for i in idx {
                        weights[i] = scale;
                    }
                }
            }
        }
        TrainerKind::Goldfish { drop_prob } => {
            let p_drop = drop_prob.as_f64();
            for i in high_risk(batch) {
                if noise_rng.next_f64() < p_drop {
                    weights[i] = S::zero();
                }
            }
            let kept = weights.iter().filter(|&&w| w != S::zero()).count();
            if kept == 0 {
                return Ok(BaselineOutcome {
                    params: p.clone(),
                    loss: None,
                    skipped: Some("every target in the batch was dropped".into()),
                });
            }
            denom = S::lit(kept as f64);
        }
        TrainerKind::EmbedNoise { alpha } => {
            let ModelSpec::CharLm { context, embed, .. } = *p.spec() else {
                return Err(Error::ModelKind {
                    model: p.spec().kind_name(),
                    op: "embedding noise",
                });
            };
            let width = context * embed;
            let scale = alpha / S::lit((width as f64).sqrt());
            let mut noise = vec![S::zero(); n * width];
            for i in high_risk(batch) {
                let u = uniform(noise_rng, width, -S::one(), S::one())?;
                for (v, e) in noise[i * width..(i + 1) * width].iter_mut().zip(u.iter()) {
                    *v = *e * scale;
                }
            }
            embed_noise = Some(noise);
        }
        TrainerKind::DpClipNoise {
            clip_norm,
            noise_multiplier,
        } => {
            for (i, w) in weights.iter_mut().enumerate() {
                let norm = grad(p, &batch.select(&[i]))?.l2_norm();
                if norm > clip_norm {
                    *w = clip_norm / norm;
                }
            }
            if noise_multiplier > S::zero() {
                let std = noise_multiplier * clip_norm / S::lit(n as f64);
                dp_noise = Some(gaussian(noise_rng, p.values().len(), std)?);
            }
        }
    }

    let used = perturbed.as_ref().unwrap_or(batch);
    let opts = LossOptions {
        weights: Some(&weights),
        denom: Some(denom),
        embed_noise: embed_noise.as_deref(),
    };
    let (loss, mut g) = loss_and_grad(p, used, opts)?;
    if let Some(noise) = dp_noise {
        g.add_scaled(S::one(), &noise)?;
    }
    Ok(BaselineOutcome {
        params: p.moved(-h.eta, &g, p.role())?,
        loss: Some(loss),
        skipped: None,
    })
}

/// Samples a batch of `h.batch_full` examples (from the full set, or the
/// retain set during the second half of a phased run) and applies
/// [`baseline_update`]. Returns the outcome and the batch used.
pub fn baseline_step<S: Scalar>(
    kind: &TrainerKind<S>,
    p: &ParamState<S>,
    part: &RiskPartition<S>,
    h: &MetaHyper<S>,
    ctx: StepContext,
    rngs: &mut TrainRngs,
) -> Result<(BaselineOutcome<S>, Batch<S>)> {
    let source = match kind {
        TrainerKind::Phased if 2 * ctx.epoch >= ctx.total_epochs => &part.retain,
        _ => &part.full,
    };
    let batch = source.sample(h.batch_full, &mut rngs.data)?;
    let out = baseline_update(kind, p, &batch, h, &mut rngs.noise)?;
    Ok((out, batch))
}
