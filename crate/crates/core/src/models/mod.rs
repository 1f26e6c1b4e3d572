//! The differentiable models, their losses, and exact gradients.

mod batch;
mod net;
mod spec;

pub use batch::{Batch, Inputs, RiskTag};
pub use net::LossOptions;
pub use spec::{Layout, LayoutEntry, ModelSpec, Role};

use crate::error::{Error, Result};
use crate::rng::{uniform, SeededRng};
use crate::scalar::Scalar;
use crate::vector::Vector;
use net::PassRequest;

/// A flat parameter vector together with the architecture it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState<S> {
    values: Vector<S>,
    layout: Layout,
    spec: ModelSpec,
    role: Role,
}

impl<S: Scalar> ParamState<S> {
    pub fn from_values(spec: ModelSpec, values: Vector<S>, role: Role) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::for_spec(&spec);
        if values.len() != layout.total() {
            return Err(Error::dim("parameter count", layout.total(), values.len()));
        }
        Ok(ParamState {
            values,
            layout,
            spec,
            role,
        })
    }

    pub fn values(&self) -> &Vector<S> {
        &self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Same architecture, new values. Fails if the length differs.
    pub fn with_values(&self, values: Vector<S>, role: Role) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::dim(
                "parameter count",
                self.values.len(),
                values.len(),
            ));
        }
        Ok(ParamState {
            values,
            layout: self.layout.clone(),
            spec: self.spec.clone(),
            role,
        })
    }

    /// Returns `values + a·direction` with the given role.
    pub fn moved(&self, a: S, direction: &Vector<S>, role: Role) -> Result<Self> {
        let values = Vector::axpy(a, direction, &self.values)?;
        self.with_values(values, role)
    }

    pub(crate) fn require_role(&self, expected: Role) -> Result<()> {
        if self.role == expected {
            Ok(())
        } else {
            Err(Error::Role {
                expected: expected.name(),
                found: self.role.name(),
            })
        }
    }
}

/// Glorot-uniform weights, zero biases. Embedding tables use the same rule
/// with `fan_in = vocab` and `fan_out = embed`.
pub fn init_params<S: Scalar>(spec: &ModelSpec, rng: &mut SeededRng) -> Result<ParamState<S>> {
    spec.validate()?;
    let layout = Layout::for_spec(spec);
    let mut values = Vec::with_capacity(layout.total());
    for entry in layout.entries() {
        if entry.shape.len() == 2 && !matches!(spec, ModelSpec::Quadratic { .. }) {
            let (rows, cols) = (entry.shape[0], entry.shape[1]);
            // Weight matrices are stored [out, in]; the embedding table is [vocab, embed].
            let bound = S::lit((6.0 / (rows + cols) as f64).sqrt());
            values.extend(uniform(rng, entry.len(), -bound, bound)?.into_inner());
        } else {
            values.extend(std::iter::repeat_n(S::zero(), entry.len()));
        }
    }
    ParamState::from_values(spec.clone(), Vector::new(values), Role::Initial)
}

/// Mean loss and the unweighted loss of every example.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<S> {
    pub mean: S,
    pub per_example: Vec<S>,
}

pub fn forward_loss<S: Scalar>(params: &ParamState<S>, batch: &Batch<S>) -> Result<LossReport<S>> {
    forward_loss_with(params, batch, LossOptions::default())
}

pub fn forward_loss_with<S: Scalar>(
    params: &ParamState<S>,
    batch: &Batch<S>,
    opts: LossOptions<'_, S>,
) -> Result<LossReport<S>> {
    let pass = net::run(
        &params.spec,
        &params.values,
        batch,
        PassRequest {
            opts,
            grad: None,
            want_probs: false,
        },
    )?;
    Ok(LossReport {
        mean: pass.mean,
        per_example: pass.per_example,
    })
}

/// Exact gradient of the mean batch loss with respect to the parameters.
pub fn grad<S: Scalar>(params: &ParamState<S>, batch: &Batch<S>) -> Result<Vector<S>> {
    Ok(loss_and_grad(params, batch, LossOptions::default())?.1)
}

/// Weighted mean loss and its exact gradient.
pub fn loss_and_grad<S: Scalar>(
    params: &ParamState<S>,
    batch: &Batch<S>,
    opts: LossOptions<'_, S>,
) -> Result<(S, Vector<S>)> {
    let mut g = vec![S::zero(); params.values.len()];
    let pass = net::run(
        &params.spec,
        &params.values,
        batch,
        PassRequest {
            opts,
            grad: Some(&mut g),
            want_probs: false,
        },
    )?;
    Ok((pass.mean, Vector::new(g).checked("gradient")?))
}

/// Loss and (for classifiers and language models) top-1 accuracy in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<S> {
    pub mean_loss: S,
    pub accuracy: Option<S>,
}

pub fn evaluate<S: Scalar>(params: &ParamState<S>, batch: &Batch<S>) -> Result<Evaluation<S>> {
    let pass = net::run(
        &params.spec,
        &params.values,
        batch,
        PassRequest {
            opts: LossOptions::default(),
            grad: None,
            want_probs: false,
        },
    )?;
    let accuracy = match params.spec {
        ModelSpec::Quadratic { .. } => None,
        _ => Some(S::lit(pass.correct as f64 / batch.len() as f64)),
    };
    Ok(Evaluation {
        mean_loss: pass.mean,
        accuracy,
    })
}

/// [`evaluate`] and the unweighted gradient from a single pass.
pub fn evaluate_with_grad<S: Scalar>(
    params: &ParamState<S>,
    batch: &Batch<S>,
) -> Result<(Evaluation<S>, Vector<S>)> {
    let mut g = vec![S::zero(); params.values.len()];
    let pass = net::run(
        &params.spec,
        &params.values,
        batch,
        PassRequest {
            opts: LossOptions::default(),
            grad: Some(&mut g),
            want_probs: false,
        },
    )?;
    let accuracy = match params.spec {
        ModelSpec::Quadratic { .. } => None,
        _ => Some(S::lit(pass.correct as f64 / batch.len() as f64)),
    };
    Ok((
        Evaluation {
            mean_loss: pass.mean,
            accuracy,
        },
        Vector::new(g).checked("gradient")?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction<S> {
    /// Arg-max class per input; ties resolve to the lowest index.
    Labels(Vec<usize>),
    /// Full next-token distribution per context.
    Distributions(Vec<Vec<S>>),
}

pub fn predict<S: Scalar>(params: &ParamState<S>, inputs: &Inputs<S>) -> Result<Prediction<S>> {
    if matches!(params.spec, ModelSpec::Quadratic { .. }) {
        return Err(Error::ModelKind {
            model: "quadratic",
            op: "predict",
        });
    }
    let n = inputs.len();
    let batch = Batch::new(inputs.clone(), vec![0; n], vec![RiskTag::LowRisk; n])?;
    let want_probs = matches!(params.spec, ModelSpec::CharLm { .. });
    let pass = net::run(
        &params.spec,
        &params.values,
        &batch,
        PassRequest {
            opts: LossOptions::default(),
            grad: None,
            want_probs,
        },
    )?;
    Ok(match pass.probs {
        Some(p) => Prediction::Distributions(p),
        None => Prediction::Labels(pass.argmax),
    })
}

/// Arg-max with ties broken towards the lowest index.
pub fn argmax<S: Scalar>(logits: &[S]) -> usize {
    net::argmax(logits)
}

pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    net::softmax(logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenLoss<S> {
    pub position: usize,
    pub token: u32,
    pub loss: S,
}

/// `−log p(token_p | previous context tokens)` for every predictable position.
pub fn per_token_loss<S: Scalar>(
    params: &ParamState<S>,
    text: &[u32],
) -> Result<Vec<TokenLoss<S>>> {
    let context = match params.spec {
        ModelSpec::CharLm { context, .. } => context,
        _ => {
            return Err(Error::ModelKind {
                model: params.spec.kind_name(),
                op: "per_token_loss",
            })
        }
    };
    if text.len() <= context {
        return Err(Error::Input(format!(
            "text of {} tokens is too short for context {context}",
            text.len()
        )));
    }
    let positions: Vec<usize> = (context..text.len()).collect();
    let ids = positions
        .iter()
        .flat_map(|&p| text[p - context..p].iter().copied())
        .collect();
    let labels = positions.iter().map(|&p| text[p] as usize).collect();
    let batch = Batch::tokens(context, ids, labels, RiskTag::LowRisk)?;
    let report = forward_loss(params, &batch)?;
    Ok(positions
        .into_iter()
        .zip(report.per_example)
        .map(|(position, loss)| TokenLoss {
            position,
            token: text[position],
            loss,
        })
        .collect())
}

#[cfg(test)]
mod tests;
