//! Run summaries and the per-token loss report.

use serde::Serialize;
use unlearn_prep::data::{CharCorpus, TokenRole};
use unlearn_prep::models::{per_token_loss, TokenLoss};
use unlearn_prep::Params64;

use crate::error::Result;

/// Measurements of one learn → unlearn (→ recover) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub forget_class: Option<usize>,
    pub pre_forget_loss: f64,
    pub pre_forget_acc: Option<f64>,
    pub pre_retain_acc: Option<f64>,
    pub unlearn_steps: usize,
    /// Steps until forget accuracy first reaches 0.5.
    pub steps_to_half: Option<usize>,
    /// Steps until forget accuracy first reaches chance level.
    pub steps_to_chance: Option<usize>,
    pub retain_acc_at_chance: Option<f64>,
    /// Forget loss of the unlearned model.
    pub efficiency: f64,
    /// Retain accuracy of the unlearned model.
    pub retention: Option<f64>,
    pub recovery_steps: Option<usize>,
    /// Forget loss of the post-recovery model.
    pub resistance: Option<f64>,
}

/// Field-wise means over runs; a field is absent unless every run has it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRecord {
    pub pre_forget_loss: f64,
    pub pre_forget_acc: Option<f64>,
    pub pre_retain_acc: Option<f64>,
    pub unlearn_steps: f64,
    pub steps_to_half: Option<f64>,
    pub steps_to_chance: Option<f64>,
    pub retain_acc_at_chance: Option<f64>,
    pub efficiency: f64,
    pub retention: Option<f64>,
    pub resistance: Option<f64>,
}

fn mean<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn mean_opt(runs: &[RunRecord], f: impl Fn(&RunRecord) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = runs.iter().map(f).collect();
    vals.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

impl MeanRecord {
    pub fn of(runs: &[RunRecord]) -> Self {
        MeanRecord {
            pre_forget_loss: mean(runs.iter().map(|r| r.pre_forget_loss)),
            pre_forget_acc: mean_opt(runs, |r| r.pre_forget_acc),
            pre_retain_acc: mean_opt(runs, |r| r.pre_retain_acc),
            unlearn_steps: mean(runs.iter().map(|r| r.unlearn_steps as f64)),
            steps_to_half: mean_opt(runs, |r| r.steps_to_half.map(|s| s as f64)),
            steps_to_chance: mean_opt(runs, |r| r.steps_to_chance.map(|s| s as f64)),
            retain_acc_at_chance: mean_opt(runs, |r| r.retain_acc_at_chance),
            efficiency: mean(runs.iter().map(|r| r.efficiency)),
            retention: mean_opt(runs, |r| r.retention),
            resistance: mean_opt(runs, |r| r.resistance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub task: crate::config::Task,
    pub trainer: &'static str,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
    pub mean: MeanRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenEntry {
    pub position: usize,
    pub token: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenSummary {
    pub filler_mean_loss: f64,
    pub filler_count: usize,
    pub template_mean_loss: f64,
    pub template_count: usize,
}

/// Per-token losses of `text` under `p`, with tokens rendered as characters.
pub fn token_report(p: &Params64, corpus: &CharCorpus, text: &str) -> Result<Vec<TokenEntry>> {
    let ids = corpus.encode(text)?;
    let losses: Vec<TokenLoss<f64>> = per_token_loss(p, &ids)?;
    let vocab = corpus.vocab();
    Ok(losses
        .into_iter()
        .map(|t| TokenEntry {
            position: t.position,
            token: vocab[t.token as usize].to_string(),
            loss: t.loss,
        })
        .collect())
}

/// Mean loss over filler and template positions.
pub fn token_summary(report: &[TokenEntry], roles: &[TokenRole]) -> TokenSummary {
    let group = |role: TokenRole| {
        let v: Vec<f64> = report
            .iter()
            .filter(|t| roles.get(t.position) == Some(&role))
            .map(|t| t.loss)
            .collect();
        (mean(v.iter().copied()), v.len())
    };
    let (filler_mean_loss, filler_count) = group(TokenRole::Filler);
    let (template_mean_loss, template_count) = group(TokenRole::Template);
    TokenSummary {
        filler_mean_loss,
        filler_count,
        template_mean_loss,
        template_count,
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}
