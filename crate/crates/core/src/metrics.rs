//! Unlearning metrics, step counting and the loss-slice probe.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{evaluate, forward_loss, ModelSpec, ParamState, Role};
use crate::scalar::Scalar;
use crate::unlearn::TrajectoryRow;
use crate::vector::Vector;

/// Fraction of examples whose arg-max prediction matches the label.
pub fn accuracy<S: Scalar>(p: &ParamState<S>, d: &LabeledDataset<S>) -> Result<S> {
    if !matches!(p.spec(), ModelSpec::Classifier { .. }) {
        return Err(Error::ModelKind {
            model: p.spec().kind_name(),
            op: "accuracy",
        });
    }
    evaluate(p, d.as_batch())?
        .accuracy
        .ok_or_else(|| Error::Input("classifier returned no accuracy".into()))
}

/// Mean forget loss of an unlearned model; higher means faster forgetting.
pub fn efficiency_metric<S: Scalar>(
    unlearned: &ParamState<S>,
    forget: &LabeledDataset<S>,
) -> Result<S> {
    unlearned.require_role(Role::Unlearned)?;
    Ok(forward_loss(unlearned, forget.as_batch())?.mean)
}

/// Retain accuracy of an unlearned model.
pub fn retention_metric<S: Scalar>(
    unlearned: &ParamState<S>,
    retain: &LabeledDataset<S>,
) -> Result<S> {
    unlearned.require_role(Role::Unlearned)?;
    accuracy(unlearned, retain)
}

/// Mean forget loss after recovery fine-tuning; higher means less regained.
pub fn resistance_metric<S: Scalar>(
    post_recovery: &ParamState<S>,
    forget: &LabeledDataset<S>,
) -> Result<S> {
    post_recovery.require_role(Role::PostRecovery)?;
    Ok(forward_loss(post_recovery, forget.as_batch())?.mean)
}

/// One-based index of the first row satisfying `pred`; `None` if no row does.
pub fn steps_to_threshold<S, F>(rows: &[TrajectoryRow<S>], pred: F) -> Option<usize>
where
    F: Fn(&TrajectoryRow<S>) -> bool,
{
    rows.iter().position(pred).map(|i| i + 1)
}

/// Loss on `d` at `values + t·direction` for each offset `t`.
pub fn loss_slice<S: Scalar>(
    p: &ParamState<S>,
    d: &LabeledDataset<S>,
    direction: &Vector<S>,
    offsets: &[S],
) -> Result<Vec<(S, S)>> {
    if direction.len() != p.values().len() {
        return Err(Error::Dimension {
            what: "slice direction",
            expected: p.values().len(),
            found: direction.len(),
        });
    }
    offsets
        .iter()
        .map(|&t| {
            let moved = p.moved(t, direction, p.role())?;
            Ok((t, forward_loss(&moved, d.as_batch())?.mean))
        })
        .collect()
}

/// First index `t ≥ window` with `|L_t − L_{t−window}| ≤ tolerance·|L_{t−window}|`.
pub fn plateau_index<S: Scalar>(losses: &[S], window: usize, tolerance: S) -> Option<usize> {
    if window == 0 {
        return None;
    }
    (window..losses.len()).find(|&t| {
        let base = losses[t - window];
        (losses[t] - base).abs() <= tolerance * base.abs()
    })
}

/// The per-run summary of one unlearning experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<S> {
    pub efficiency: S,
    pub retention: Option<S>,
    pub resistance: Option<S>,
    pub steps_to_stop: Option<usize>,
    pub pre_unlearn_forget_acc: Option<S>,
}

/// Spearman rank correlation with average ranks for ties. `None` when fewer
/// than two pairs are given or either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Batch, RiskTag};
    use crate::unlearn::Phase;

    fn quad(theta: f64, role: Role) -> ParamState<f64> {
        ParamState::from_values(ModelSpec::quadratic(1), Vector::new(vec![theta]), role).unwrap()
    }

    fn points(xs: &[f64]) -> LabeledDataset<f64> {
        let b = Batch::dense(1, xs.to_vec(), vec![0; xs.len()], RiskTag::HighRisk).unwrap();
        LabeledDataset::new("q", 1, b).unwrap()
    }

    fn acc_rows(accs: &[f64]) -> Vec<TrajectoryRow<f64>> {
        accs.iter()
            .enumerate()
            .map(|(i, &a)| TrajectoryRow {
                step: i + 1,
                epoch: None,
                phase: Phase::Unlearning,
                forget_loss: None,
                forget_acc: Some(a),
                retain_acc: None,
                recovery_loss: None,
            })
            .collect()
    }

    /// A 2-input, 2-class linear classifier whose logits equal its inputs.
    fn identity_classifier() -> ParamState<f64> {
        let spec = ModelSpec::classifier(&[2, 2]);
        ParamState::from_values(
            spec,
            Vector::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            Role::Unlearned,
        )
        .unwrap()
    }

    fn two_class(values: Vec<f64>, labels: Vec<usize>) -> LabeledDataset<f64> {
        LabeledDataset::new(
            "c",
            2,
            Batch::dense(2, values, labels, RiskTag::LowRisk).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let p = identity_classifier();
        let all = two_class(vec![1.0, 0.0, 0.0, 1.0], vec![0, 1]);
        assert_eq!(accuracy(&p, &all).unwrap(), 1.0);
        let three = two_class(
            vec![1.0, 0.0, 0.0, 1.0, 2.0, 1.0, 0.0, 3.0],
            vec![0, 1, 1, 1],
        );
        assert_eq!(accuracy(&p, &three).unwrap(), 0.75);
        assert_eq!(retention_metric(&p, &three).unwrap(), 0.75);
        assert!(matches!(
            accuracy(&quad(0.0, Role::Unlearned), &points(&[1.0])),
            Err(Error::ModelKind { .. })
        ));
    }

    #[test]
    fn efficiency_and_resistance_quad_oracle() {
        let f = points(&[1.0]);
        assert!(
            (efficiency_metric(&quad(-0.5, Role::Unlearned), &f).unwrap() - 1.125).abs() < 1e-12
        );
        assert_eq!(
            efficiency_metric(&quad(1.0, Role::Unlearned), &f).unwrap(),
            0.0
        );
        let near = efficiency_metric(&quad(0.5, Role::Unlearned), &f).unwrap();
        let far = efficiency_metric(&quad(-2.0, Role::Unlearned), &f).unwrap();
        assert!(far > near);
        assert!(
            (resistance_metric(&quad(-0.25, Role::PostRecovery), &f).unwrap() - 0.78125).abs()
                < 1e-12
        );
        assert_eq!(
            resistance_metric(&quad(1.0, Role::PostRecovery), &f).unwrap(),
            0.0
        );
        assert!(efficiency_metric(&quad(-0.5, Role::Prepared), &f).is_err());
        assert!(resistance_metric(&quad(-0.5, Role::Unlearned), &f).is_err());
    }

    #[test]
    fn steps_to_threshold_cases() {
        let pred = |r: &TrajectoryRow<f64>| r.forget_acc.unwrap() <= 0.5;
        assert_eq!(
            steps_to_threshold(&acc_rows(&[0.9, 0.6, 0.4]), pred),
            Some(3)
        );
        assert_eq!(steps_to_threshold(&acc_rows(&[0.3, 0.6]), pred), Some(1));
        assert_eq!(steps_to_threshold(&acc_rows(&[0.9, 0.8]), pred), None);
    }

    #[test]
    fn loss_slice_quad_oracle() {
        let p = quad(0.0, Role::Prepared);
        let d = points(&[1.0]);
        let s = loss_slice(&p, &d, &Vector::new(vec![1.0]), &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s, vec![(-1.0, 2.0), (0.0, 0.5), (1.0, 0.0)]);
        let flat = loss_slice(&p, &d, &Vector::new(vec![0.0]), &[-3.0, 7.0]).unwrap();
        assert_eq!(flat[0].1, flat[1].1);
        assert!(loss_slice(&p, &d, &Vector::new(vec![1.0, 2.0]), &[0.0]).is_err());
    }

    #[test]
    fn plateau_detection() {
        let mut l: Vec<f64> = (0..30).map(|i| 10.0 / (1.0 + i as f64)).collect();
        assert_eq!(plateau_index(&l, 20, 1e-3), None);
        l.extend(std::iter::repeat_n(0.3, 25));
        assert_eq!(plateau_index(&l, 20, 1e-3), Some(50));
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(spearman(&[1.0, 2.0], &[4.0, 4.0]), None);
        // scipy.stats.spearmanr([1,2,3,4,5], [2,1,4,3,5]) = 0.8
        assert!(
            (spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap() - 0.8).abs()
                < 1e-12
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn efficiency_is_the_forget_loss(theta in -4.0f64..4.0, xs in prop::collection::vec(-4.0f64..4.0, 1..6)) {
                let p = quad(theta, Role::Unlearned);
                let f = points(&xs);
                let m = efficiency_metric(&p, &f).unwrap();
                prop_assert!((m - forward_loss(&p, f.as_batch()).unwrap().mean).abs() <= 1e-12);
                prop_assert!(m >= 0.0);
            }

            #[test]
            fn slice_at_zero_is_forward_loss(theta in -4.0f64..4.0, dir in -4.0f64..4.0, x in -4.0f64..4.0) {
                let p = quad(theta, Role::Prepared);
                let d = points(&[x]);
                let s = loss_slice(&p, &d, &Vector::new(vec![dir]), &[0.0]).unwrap();
                prop_assert_eq!(s[0].1, forward_loss(&p, d.as_batch()).unwrap().mean);
            }

            #[test]
            fn weaker_predicate_never_needs_more_steps(accs in prop::collection::vec(0.0f64..1.0, 0..30), t in 0.0f64..1.0, dt in 0.0f64..0.5) {
                let rows = acc_rows(&accs);
                let strict = steps_to_threshold(&rows, |r| r.forget_acc.unwrap() <= t);
                let weak = steps_to_threshold(&rows, |r| r.forget_acc.unwrap() <= t + dt);
                if let Some(s) = strict {
                    prop_assert!(weak.unwrap() <= s);
                }
            }
        }
    }
}
