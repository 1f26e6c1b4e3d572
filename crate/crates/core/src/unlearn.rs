//! Gradient-ascent unlearning and recovery fine-tuning.

use crate::data::{ExampleSource, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::plateau_index;
use crate::models::{evaluate, evaluate_with_grad, grad, Batch, Evaluation, ParamState, Role};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Learning,
    Unlearning,
    Recovery,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Learning => "learning",
            Phase::Unlearning => "unlearning",
            Phase::Recovery => "recovery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule<S> {
    ForgetAccAtMost(S),
    ForgetLossAtLeast(S),
    None,
}

impl<S: Scalar> StopRule<S> {
    fn met(&self, ev: &Evaluation<S>) -> Result<bool> {
        match *self {
            StopRule::ForgetAccAtMost(t) => match ev.accuracy {
                Some(acc) => Ok(acc <= t),
                None => Err(Error::ModelKind {
                    model: "quadratic",
                    op: "accuracy stop rule",
                }),
            },
            StopRule::ForgetLossAtLeast(t) => Ok(ev.mean_loss >= t),
            StopRule::None => Ok(false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    FullForgetSet,
    Minibatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnlearnConfig<S> {
    pub rate: S,
    pub max_steps: usize,
    pub stop: StopRule<S>,
    pub batch: BatchMode,
}

impl<S: Scalar> UnlearnConfig<S> {
    pub fn validate(&self) -> Result<()> {
        check_rate("rate", self.rate)?;
        match self.stop {
            StopRule::ForgetAccAtMost(t) | StopRule::ForgetLossAtLeast(t) if !t.is_finite() => Err(
                Error::param("stop", format!("threshold must be finite, got {t}")),
            ),
            _ => check_batch_mode(self.batch),
        }
    }
}

fn check_rate<S: Scalar>(name: &'static str, rate: S) -> Result<()> {
    if rate.is_finite() && rate > S::zero() {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be finite and > 0, got {rate}"),
        ))
    }
}

fn check_batch_mode(mode: BatchMode) -> Result<()> {
    match mode {
        BatchMode::Minibatch(0) => Err(Error::param("batch", "minibatch size must be >= 1")),
        _ => Ok(()),
    }
}

/// One measurement row. `step` counts from 1 within its phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow<S> {
    pub step: usize,
    pub epoch: Option<usize>,
    pub phase: Phase,
    pub forget_loss: Option<S>,
    pub forget_acc: Option<S>,
    pub retain_acc: Option<S>,
    pub recovery_loss: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<S> {
    pub rows: Vec<TrajectoryRow<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryRow<S>> {
        self.rows.last()
    }
}

/// `values + rate·∇L(p; forget_batch)`, tagged [`Role::Unlearned`].
pub fn ga_step<S: Scalar>(
    p: &ParamState<S>,
    forget_batch: &Batch<S>,
    rate: S,
) -> Result<ParamState<S>> {
    check_rate("rate", rate)?;
    let g = grad(p, forget_batch)?;
    p.moved(rate, &g, Role::Unlearned)
}

/// Measurement hook run after every unlearning step. It sees the parameters
/// and the step's forget-set evaluation, and returns the retain accuracy to
/// record, if any.
pub type Observer<'a, S> = &'a mut dyn FnMut(&ParamState<S>, &Evaluation<S>) -> Result<Option<S>>;

/// Gradient ascent on forget data until the stop rule holds on the whole
/// forget set or `max_steps` is reached. Retain data is never an input.
pub fn unlearn_until<S: Scalar, F: ExampleSource<S> + ?Sized>(
    p: &ParamState<S>,
    forget: &F,
    cfg: &UnlearnConfig<S>,
    rng: &mut SeededRng,
    mut observer: Option<Observer<'_, S>>,
) -> Result<(ParamState<S>, Trajectory<S>)> {
    cfg.validate()?;
    let mut traj = Trajectory::default();
    if cfg.max_steps == 0 {
        return Ok((p.clone(), traj));
    }
    let full = forget.full_batch();
    let mut theta = p.clone();
    // In full-batch mode the gradient at θ comes from the same pass that
    // measures θ.
    let (mut ev, mut pending) = match cfg.batch {
        BatchMode::FullForgetSet => {
            let (ev, g) = evaluate_with_grad(&theta, full)?;
            (ev, Some(g))
        }
        BatchMode::Minibatch(_) => (evaluate(&theta, full)?, None),
    };
    if cfg.stop.met(&ev)? {
        return Ok((theta, traj));
    }
    for step in 1..=cfg.max_steps {
        let g: Vector<S> = match (pending.take(), cfg.batch) {
            (Some(g), _) => g,
            (None, BatchMode::Minibatch(size)) => grad(&theta, &forget.sample(size, rng)?)?,
            (None, BatchMode::FullForgetSet) => grad(&theta, full)?,
        };
        theta = theta.moved(cfg.rate, &g, Role::Unlearned)?;
        let last = step == cfg.max_steps;
        ev = match cfg.batch {
            BatchMode::FullForgetSet if !last => {
                let (ev, g) = evaluate_with_grad(&theta, full)?;
                pending = Some(g);
                ev
            }
            _ => evaluate(&theta, full)?,
        };
        let retain_acc = match observer.as_mut() {
            Some(f) => f(&theta, &ev)?,
            None => None,
        };
        traj.rows.push(TrajectoryRow {
            step,
            epoch: None,
            phase: Phase::Unlearning,
            forget_loss: Some(ev.mean_loss),
            forget_acc: ev.accuracy,
            retain_acc,
            recovery_loss: None,
        });
        if cfg.stop.met(&ev)? {
            break;
        }
    }
    Ok((theta, traj))
}

/// Early stop once the recovery loss changes by less than `tolerance`
/// (relative) over `window` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau<S> {
    pub window: usize,
    pub tolerance: S,
}

impl<S: Scalar> Default for Plateau<S> {
    fn default() -> Self {
        Plateau {
            window: 20,
            tolerance: S::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverConfig<S> {
    pub rate: S,
    pub max_steps: usize,
    pub batch: BatchMode,
    pub plateau: Option<Plateau<S>>,
}

/// Gradient descent on the recovery fine-tuning set. `measure_forget` is
/// evaluated for the trajectory only and never drives an update.
pub fn recover<S: Scalar>(
    p: &ParamState<S>,
    finetune: &LabeledDataset<S>,
    cfg: &RecoverConfig<S>,
    rng: &mut SeededRng,
    measure_forget: Option<&LabeledDataset<S>>,
) -> Result<(ParamState<S>, Trajectory<S>)> {
    p.require_role(Role::Unlearned)?;
    check_rate("recovery_rate", cfg.rate)?;
    check_batch_mode(cfg.batch)?;
    if let Some(pl) = cfg.plateau {
        if pl.window == 0 || !(pl.tolerance.is_finite() && pl.tolerance >= S::zero()) {
            return Err(Error::param(
                "plateau",
                "window must be >= 1 and tolerance finite and >= 0",
            ));
        }
    }
    let full = finetune.as_batch();
    let mut theta = p.clone().with_role(Role::PostRecovery);
    let mut traj = Trajectory::default();
    if cfg.max_steps == 0 {
        return Ok((theta, traj));
    }
    let (ev, g) = evaluate_with_grad(&theta, full)?;
    let mut losses = vec![ev.mean_loss];
    let mut pending = Some(g);
    for step in 1..=cfg.max_steps {
        let g = match (pending.take(), cfg.batch) {
            (Some(g), BatchMode::FullForgetSet) => g,
            (_, BatchMode::Minibatch(size)) => grad(&theta, &finetune.sample(size, rng)?)?,
            (None, BatchMode::FullForgetSet) => grad(&theta, full)?,
        };
        theta = theta.moved(-cfg.rate, &g, Role::PostRecovery)?;
        let rec = if cfg.batch == BatchMode::FullForgetSet && step < cfg.max_steps {
            let (ev, g) = evaluate_with_grad(&theta, full)?;
            pending = Some(g);
            ev
        } else {
            evaluate(&theta, full)?
        };
        losses.push(rec.mean_loss);
        let forget = measure_forget
            .map(|d| evaluate(&theta, d.as_batch()))
            .transpose()?;
        traj.rows.push(TrajectoryRow {
            step,
            epoch: None,
            phase: Phase::Recovery,
            forget_loss: forget.as_ref().map(|e| e.mean_loss),
            forget_acc: forget.and_then(|e| e.accuracy),
            retain_acc: None,
            recovery_loss: Some(rec.mean_loss),
        });
        if let Some(pl) = cfg.plateau {
            if plateau_index(&losses, pl.window, pl.tolerance).is_some() {
                break;
            }
        }
    }
    Ok((theta, traj))
}
