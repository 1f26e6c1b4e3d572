//! Forward passes and hand-derived backpropagation for every architecture.

use crate::error::{Error, Result};
use crate::models::batch::{Batch, Inputs};
use crate::models::spec::ModelSpec;
use crate::scalar::Scalar;

/// Per-example loss weighting and input perturbation for one evaluation.
///
/// The batch loss is `Σ wᵢ·lᵢ / denom`; `wᵢ` defaults to 1 and `denom` to
/// the batch size.
#[derive(Debug, Clone, Copy)]
pub struct LossOptions<'a, S> {
    pub weights: Option<&'a [S]>,
    pub denom: Option<S>,
    /// Added to each example's concatenated context embeddings
    /// (`context·embed` values per example). Language model only.
    pub embed_noise: Option<&'a [S]>,
}

impl<S> Default for LossOptions<'_, S> {
    fn default() -> Self {
        LossOptions {
            weights: None,
            denom: None,
            embed_noise: None,
        }
    }
}

pub(crate) struct Pass<S> {
    pub mean: S,
    pub per_example: Vec<S>,
    pub correct: usize,
    pub probs: Option<Vec<Vec<S>>>,
    pub argmax: Vec<usize>,
}

struct Dense {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

fn dense_stack(offset: usize, widths: &[usize]) -> Vec<Dense> {
    let mut off = offset;
    widths
        .windows(2)
        .map(|w| {
            let layer = Dense {
                w: off,
                b: off + w[0] * w[1],
                fan_in: w[0],
                fan_out: w[1],
            };
            off += w[0] * w[1] + w[1];
            layer
        })
        .collect()
}

/// `acts[0]` must hold the input; fills `acts[1..]`. Hidden layers use tanh,
/// the last layer is left linear (logits).
fn forward_dense<S: Scalar>(layers: &[Dense], params: &[S], acts: &mut [Vec<S>]) {
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let (head, tail) = acts.split_at_mut(l + 1);
        let input = &head[l];
        let out = &mut tail[0];
        out.clear();
        for o in 0..layer.fan_out {
            let row = &params[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
            let mut z = params[layer.b + o];
            for (&wi, &xi) in row.iter().zip(input.iter()) {
                z += wi * xi;
            }
            out.push(if l == last { z } else { z.tanh() });
        }
    }
}

/// Backpropagates `delta` (gradient w.r.t. the logits) into `grad`, returning
/// the gradient w.r.t. the input when `want_input` is set.
fn backward_dense<S: Scalar>(
    layers: &[Dense],
    params: &[S],
    acts: &[Vec<S>],
    mut delta: Vec<S>,
    grad: &mut [S],
    want_input: bool,
) -> Option<Vec<S>> {
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &acts[l];
        for (o, &d) in delta.iter().enumerate() {
            grad[layer.b + o] += d;
            let grow = &mut grad[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
            for (g, &xi) in grow.iter_mut().zip(input.iter()) {
                *g += d * xi;
            }
        }
        if l == 0 && !want_input {
            return None;
        }
        let mut back = vec![S::zero(); layer.fan_in];
        for (o, &d) in delta.iter().enumerate() {
            let row = &params[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
            for (bi, &wi) in back.iter_mut().zip(row.iter()) {
                *bi += wi * d;
            }
        }
        if l > 0 {
            for (bi, &a) in back.iter_mut().zip(input.iter()) {
                *bi *= S::one() - a * a;
            }
        }
        delta = back;
    }
    Some(delta)
}

/// Stable log-sum-exp of the logits and index of the (first) maximum.
fn log_sum_exp<S: Scalar>(logits: &[S]) -> (S, usize) {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    let m = logits[best];
    let sum: S = logits.iter().map(|&z| (z - m).exp()).sum();
    (m + sum.ln(), best)
}

pub(crate) fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let (lse, _) = log_sum_exp(logits);
    logits.iter().map(|&z| (z - lse).exp()).collect()
}

pub(crate) fn argmax<S: Scalar>(logits: &[S]) -> usize {
    log_sum_exp(logits).1
}

fn check_batch<S: Scalar>(spec: &ModelSpec, batch: &Batch<S>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    match (spec, &batch.inputs) {
        (ModelSpec::Classifier { widths }, Inputs::Dense { dim, .. }) => {
            if *dim != widths[0] {
                return Err(Error::dim("input width", widths[0], *dim));
            }
        }
        (ModelSpec::Quadratic { dim: d }, Inputs::Dense { dim, .. }) => {
            if dim != d {
                return Err(Error::dim("input width", *d, *dim));
            }
        }
        (ModelSpec::CharLm { vocab, context, .. }, Inputs::Tokens { context: c, ids }) => {
            if c != context {
                return Err(Error::dim("context length", *context, *c));
            }
            if let Some(&bad) = ids.iter().find(|&&t| t as usize >= *vocab) {
                return Err(Error::dim("token id bound", *vocab, bad as usize));
            }
        }
        _ => {
            return Err(Error::Input(format!(
                "input kind does not match {} model",
                spec.kind_name()
            )))
        }
    }
    let classes = spec.num_outputs();
    if classes > 0 {
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::dim("label bound", classes, bad));
        }
    }
    Ok(())
}

pub(crate) struct PassRequest<'a, S> {
    pub opts: LossOptions<'a, S>,
    pub grad: Option<&'a mut [S]>,
    pub want_probs: bool,
}

/// Evaluates the model on a batch, optionally accumulating the gradient of
/// the (weighted) mean loss into `req.grad`.
pub(crate) fn run<S: Scalar>(
    spec: &ModelSpec,
    params: &[S],
    batch: &Batch<S>,
    req: PassRequest<'_, S>,
) -> Result<Pass<S>> {
    check_batch(spec, batch)?;
    let n = batch.len();
    let opts = req.opts;
    if let Some(w) = opts.weights {
        if w.len() != n {
            return Err(Error::dim("loss weights", n, w.len()));
        }
    }
    let denom = opts.denom.unwrap_or_else(|| S::lit(n as f64));
    if denom.is_nan() || denom <= S::zero() {
        return Err(Error::param("denom", "loss normaliser must be > 0"));
    }
    let mut grad = req.grad;
    let mut per_example = Vec::with_capacity(n);
    let mut weighted_sum = S::zero();
    let mut correct = 0;
    let mut argmaxes = Vec::with_capacity(n);
    let mut probs = req.want_probs.then(|| Vec::with_capacity(n));

    match spec {
        ModelSpec::Quadratic { dim } => {
            let x = match &batch.inputs {
                Inputs::Dense { values, .. } => values,
                Inputs::Tokens { .. } => unreachable!(),
            };
            for i in 0..n {
                let w = opts.weights.map_or(S::one(), |w| w[i]);
                let row = &x[i * dim..(i + 1) * dim];
                let half = S::lit(0.5);
                let loss: S = params
                    .iter()
                    .zip(row)
                    .map(|(&t, &xi)| half * (t - xi) * (t - xi))
                    .sum();
                if let Some(g) = grad.as_deref_mut() {
                    let scale = w / denom;
                    for ((gj, &t), &xi) in g.iter_mut().zip(params).zip(row) {
                        *gj += scale * (t - xi);
                    }
                }
                weighted_sum += w * loss;
                per_example.push(loss);
            }
        }
        ModelSpec::Classifier { widths } => {
            let layers = dense_stack(0, widths);
            let mut acts: Vec<Vec<S>> = widths.iter().map(|&w| Vec::with_capacity(w)).collect();
            for i in 0..n {
                let w = opts.weights.map_or(S::one(), |w| w[i]);
                acts[0].clear();
                acts[0].extend_from_slice(batch.inputs.dense_row(i).unwrap());
                forward_dense(&layers, params, &mut acts);
                let logits = acts.last().unwrap();
                let (lse, best) = log_sum_exp(logits);
                let y = batch.labels[i];
                let loss = lse - logits[y];
                if best == y {
                    correct += 1;
                }
                argmaxes.push(best);
                if let Some(p) = probs.as_mut() {
                    p.push(logits.iter().map(|&z| (z - lse).exp()).collect());
                }
                if let Some(g) = grad.as_deref_mut() {
                    let scale = w / denom;
                    let mut delta: Vec<S> = logits.iter().map(|&z| (z - lse).exp()).collect();
                    delta[y] -= S::one();
                    delta.iter_mut().for_each(|d| *d *= scale);
                    backward_dense(&layers, params, &acts, delta, g, false);
                }
                weighted_sum += w * loss;
                per_example.push(loss);
            }
        }
        ModelSpec::CharLm {
            vocab,
            context,
            embed,
            hidden,
        } => {
            let feat = context * embed;
            if let Some(noise) = opts.embed_noise {
                if noise.len() != n * feat {
                    return Err(Error::dim("embedding noise", n * feat, noise.len()));
                }
            }
            let emb_len = vocab * embed;
            let layers = dense_stack(emb_len, &[feat, *hidden, *vocab]);
            let mut acts: Vec<Vec<S>> = vec![Vec::with_capacity(feat), Vec::new(), Vec::new()];
            for i in 0..n {
                let w = opts.weights.map_or(S::one(), |w| w[i]);
                let tokens = batch.inputs.token_row(i).unwrap();
                acts[0].clear();
                for &t in tokens {
                    let t = t as usize;
                    acts[0].extend_from_slice(&params[t * embed..(t + 1) * embed]);
                }
                if let Some(noise) = opts.embed_noise {
                    for (a, &e) in acts[0].iter_mut().zip(&noise[i * feat..(i + 1) * feat]) {
                        *a += e;
                    }
                }
                forward_dense(&layers, params, &mut acts);
                let logits = &acts[2];
                let (lse, best) = log_sum_exp(logits);
                let y = batch.labels[i];
                let loss = lse - logits[y];
                if best == y {
                    correct += 1;
                }
                argmaxes.push(best);
                if let Some(p) = probs.as_mut() {
                    p.push(logits.iter().map(|&z| (z - lse).exp()).collect());
                }
                if let Some(g) = grad.as_deref_mut() {
                    let scale = w / denom;
                    let mut delta: Vec<S> = logits.iter().map(|&z| (z - lse).exp()).collect();
                    delta[y] -= S::one();
                    delta.iter_mut().for_each(|d| *d *= scale);
                    let d_in = backward_dense(&layers, params, &acts, delta, g, true).unwrap();
                    for (k, &t) in tokens.iter().enumerate() {
                        let t = t as usize;
                        let dst = &mut g[t * embed..(t + 1) * embed];
                        for (gj, &dj) in dst.iter_mut().zip(&d_in[k * embed..(k + 1) * embed]) {
                            *gj += dj;
                        }
                    }
                }
                weighted_sum += w * loss;
                per_example.push(loss);
            }
        }
    }

    Ok(Pass {
        mean: weighted_sum / denom,
        per_example,
        correct,
        probs,
        argmax: argmaxes,
    })
}
