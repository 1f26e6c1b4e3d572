use crate::data::RiskPartition;
use crate::error::{Error, Result};
use crate::models::{evaluate, init_params, ModelSpec, ParamState, RiskTag, Role};
use crate::prepare::{
    baseline_step, ready2unlearn_step, MetaHyper, StepContext, TrainEvent, TrainLog, TrainRngs,
    TrainRow, TrainerKind,
};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::unlearn::Phase;

/// The trainer used in each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<S> {
    epochs: Vec<TrainerKind<S>>,
}

impl<S: Scalar> Schedule<S> {
    pub fn new(epochs: Vec<TrainerKind<S>>) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::param("epochs", "must be >= 1"));
        }
        for k in &epochs {
            k.validate()?;
        }
        Ok(Schedule { epochs })
    }

    pub fn constant(kind: TrainerKind<S>, epochs: usize) -> Result<Self> {
        Self::new(vec![kind; epochs])
    }

    /// Standard training for `total − prepared` epochs, then the dual-loop
    /// trainer for the final `prepared` epochs.
    pub fn prepared_tail(total: usize, prepared: usize) -> Result<Self> {
        if prepared > total {
            return Err(Error::param(
                "prepared_epochs",
                format!("{prepared} exceeds the {total} training epochs"),
            ));
        }
        let mut epochs = vec![TrainerKind::Standard; total - prepared];
        epochs.extend(std::iter::repeat_n(TrainerKind::Ready2Unlearn, prepared));
        Self::new(epochs)
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn kinds(&self) -> &[TrainerKind<S>] {
        &self.epochs
    }
}

/// When whole-set forget and retain measurements are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPolicy {
    Never,
    #[default]
    EpochEnd,
    /// Every `k` steps and at each epoch end.
    Every(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainOptions {
    pub eval: EvalPolicy,
}

/// Initializes a model from `rng` and trains it epoch by epoch. Every epoch
/// has `ceil(|D| / batch_full)` steps. The result is tagged
/// [`Role::Prepared`].
pub fn train<S: Scalar>(
    spec: &ModelSpec,
    part: &RiskPartition<S>,
    schedule: &Schedule<S>,
    h: &MetaHyper<S>,
    rng: &mut SeededRng,
    opts: TrainOptions,
) -> Result<(ParamState<S>, TrainLog<S>)> {
    h.validate()?;
    if let EvalPolicy::Every(0) = opts.eval {
        return Err(Error::param("eval_every", "must be >= 1"));
    }
    let mut p = init_params(spec, rng)?;
    let mut rngs = TrainRngs::split(rng);
    let steps_per_epoch = part.full.len().div_ceil(h.batch_full);
    let total_epochs = schedule.len();
    let mut log = TrainLog::default();
    let mut step = 0;

    for (epoch, kind) in schedule.kinds().iter().enumerate() {
        let ctx = StepContext {
            epoch,
            total_epochs,
        };
        for s in 0..steps_per_epoch {
            step += 1;
            let (full_loss, high_risk_seen) = match kind {
                TrainerKind::Ready2Unlearn => {
                    let (next, _, batches, loss) = ready2unlearn_step(&p, part, h, &mut rngs.data)?;
                    p = next;
                    (Some(loss), batches.full.count_tag(RiskTag::HighRisk))
                }
                _ => {
                    let (out, batch) = baseline_step(kind, &p, part, h, ctx, &mut rngs)?;
                    if let Some(reason) = out.skipped {
                        log.events.push(TrainEvent::Skipped { step, reason });
                    }
                    p = out.params;
                    (out.loss, batch.count_tag(RiskTag::HighRisk))
                }
            };
            let epoch_end = s + 1 == steps_per_epoch;
            let measure = match opts.eval {
                EvalPolicy::Never => false,
                EvalPolicy::EpochEnd => epoch_end,
                EvalPolicy::Every(k) => epoch_end || step % k == 0,
            };
            let mut row = TrainRow {
                step,
                epoch,
                phase: Phase::Learning,
                trainer: kind.name(),
                full_loss,
                high_risk_seen,
                forget_loss: None,
                retain_loss: None,
                forget_acc: None,
                retain_acc: None,
            };
            if measure {
                let f = evaluate(&p, part.forget.as_batch())?;
                let r = evaluate(&p, part.retain.as_batch())?;
                row.forget_loss = Some(f.mean_loss);
                row.retain_loss = Some(r.mean_loss);
                row.forget_acc = f.accuracy;
                row.retain_acc = r.accuracy;
            }
            log.rows.push(row);
        }
    }
    Ok((p.with_role(Role::Prepared), log))
}
