//! The dual-loop update: a simulated unlearning (ascent) step on forget data,
//! first-order meta-gradients at the adapted point, and an outer descent step.

use crate::data::{ExampleSource, RiskPartition};
use crate::error::Result;
use crate::models::{grad, loss_and_grad, Batch, LossOptions, ParamState, Role};
use crate::prepare::{GradBundle, MetaHyper};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::vector::Vector;

/// `θ̂ = θ + α·∇L(θ; x_f)`, tagged [`Role::Adapted`].
pub fn inner_ascent_step<S: Scalar>(
    p: &ParamState<S>,
    forget: &Batch<S>,
    alpha: S,
) -> Result<ParamState<S>> {
    if !(alpha.is_finite() && alpha >= S::zero()) {
        return Err(crate::Error::param(
            "alpha",
            format!("must be finite and >= 0, got {alpha}"),
        ));
    }
    let g = grad(p, forget)?;
    p.moved(alpha, &g, Role::Adapted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaGradients<S> {
    pub g0: Vector<S>,
    pub g1: Vector<S>,
    pub g2: Option<Vector<S>>,
}

/// Plain gradients at the adapted parameters. Nothing is differentiated
/// through the inner step.
pub fn meta_gradients<S: Scalar>(
    adapted: &ParamState<S>,
    forget: &Batch<S>,
    retain: &Batch<S>,
    recovery: Option<&Batch<S>>,
) -> Result<MetaGradients<S>> {
    adapted.require_role(Role::Adapted)?;
    Ok(MetaGradients {
        g0: grad(adapted, forget)?,
        g1: grad(adapted, retain)?,
        g2: recovery.map(|b| grad(adapted, b)).transpose()?,
    })
}

/// The minibatches consumed by one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaBatches<S> {
    pub forget: Batch<S>,
    pub retain: Batch<S>,
    pub recovery: Option<Batch<S>>,
    pub full: Batch<S>,
}

/// One outer step on given batches:
/// `θ ← θ − η(−g0 + λ1·g1 + λ2·g2 + λ3·g3)`.
///
/// The forget batch is shared by the inner step and `g0`. The recovery term
/// is dropped when there is no recovery batch or `λ2 = 0`. Returns the new
/// parameters (same role as `p`), the gradients, and the full-batch loss.
pub fn ready2unlearn_update<S: Scalar>(
    p: &ParamState<S>,
    batches: &MetaBatches<S>,
    h: &MetaHyper<S>,
) -> Result<(ParamState<S>, GradBundle<S>, S)> {
    let adapted = inner_ascent_step(p, &batches.forget, h.alpha)?;
    let recovery = batches.recovery.as_ref().filter(|_| h.lambda2 != S::zero());
    let meta = meta_gradients(&adapted, &batches.forget, &batches.retain, recovery)?;
    let (full_loss, g3) = loss_and_grad(p, &batches.full, LossOptions::default())?;

    let mut direction = meta.g0.scale(-S::one());
    direction.add_scaled(h.lambda1, &meta.g1)?;
    if let Some(g2) = &meta.g2 {
        direction.add_scaled(h.lambda2, g2)?;
    }
    direction.add_scaled(h.lambda3, &g3)?;
    let next = p.moved(-h.eta, &direction, p.role())?;
    Ok((
        next,
        GradBundle {
            g0: meta.g0,
            g1: meta.g1,
            g2: meta.g2,
            g3,
        },
        full_loss,
    ))
}

/// New parameters, meta-gradients, the sampled batches, and the full-batch loss.
pub type OuterStep<S> = (ParamState<S>, GradBundle<S>, MetaBatches<S>, S);

/// Samples forget, retain, recovery (when present), then full-data batches,
/// in that order, and applies [`ready2unlearn_update`].
pub fn ready2unlearn_step<S: Scalar>(
    p: &ParamState<S>,
    part: &RiskPartition<S>,
    h: &MetaHyper<S>,
    rng: &mut SeededRng,
) -> Result<OuterStep<S>> {
    h.validate()?;
    let batches = MetaBatches {
        forget: part.forget.sample(h.batch_forget, rng)?,
        retain: part.retain.sample(h.batch_retain, rng)?,
        recovery: part
            .recovery
            .as_ref()
            .map(|d| d.sample(h.batch_recovery, rng))
            .transpose()?,
        full: part.full.sample(h.batch_full, rng)?,
    };
    let (next, grads, loss) = ready2unlearn_update(p, &batches, h)?;
    Ok((next, grads, batches, loss))
}

/// `h.outer_steps` consecutive outer steps from `p`; the result is tagged
/// [`Role::Prepared`].
pub fn run_outer_loop<S: Scalar>(
    p: &ParamState<S>,
    part: &RiskPartition<S>,
    h: &MetaHyper<S>,
    rng: &mut SeededRng,
) -> Result<ParamState<S>> {
    let mut theta = p.clone();
    for _ in 0..h.outer_steps {
        theta = ready2unlearn_step(&theta, part, h, rng)?.0;
    }
    Ok(theta.with_role(Role::Prepared))
}
