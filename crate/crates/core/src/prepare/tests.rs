use super::*;
use crate::data::{
    build_char_corpus, partition_by_class, synth_blobs, window_dataset, LabeledDataset,
    RiskPartition,
};
use crate::models::{forward_loss, init_params, Batch, ModelSpec, ParamState, RiskTag, Role};
use crate::rng::SeededRng;
use crate::vector::Vector;

fn quad(theta: f64) -> ParamState<f64> {
    ParamState::from_values(
        ModelSpec::quadratic(1),
        Vector::new(vec![theta]),
        Role::Initial,
    )
    .unwrap()
}

fn pts(xs: &[f64], tag: RiskTag) -> Batch<f64> {
    Batch::dense(1, xs.to_vec(), vec![0; xs.len()], tag).unwrap()
}

fn hyper(alpha: f64, eta: f64, l1: f64, l2: f64, l3: f64) -> MetaHyper<f64> {
    MetaHyper {
        alpha,
        eta,
        lambda1: l1,
        lambda2: l2,
        lambda3: l3,
        ..MetaHyper::default()
    }
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn inner_ascent_quad_oracle() {
    let xf = pts(&[1.0], RiskTag::HighRisk);
    let a = inner_ascent_step(&quad(0.0), &xf, 0.1).unwrap();
    close(a.values()[0], -0.1);
    assert_eq!(a.role(), Role::Adapted);
    close(forward_loss(&quad(0.0), &xf).unwrap().mean, 0.5);
    close(forward_loss(&a, &xf).unwrap().mean, 0.605);
    assert_eq!(
        inner_ascent_step(&quad(0.0), &xf, 0.0).unwrap().values()[0],
        0.0
    );
    assert!(inner_ascent_step(&quad(0.0), &xf, -0.1).is_err());
}

#[test]
fn meta_gradients_quad_oracle() {
    let xf = pts(&[1.0], RiskTag::HighRisk);
    let adapted = inner_ascent_step(&quad(0.0), &xf, 0.1).unwrap();
    let m = meta_gradients(
        &adapted,
        &xf,
        &pts(&[-1.0], RiskTag::LowRisk),
        Some(&pts(&[2.0], RiskTag::Recovery)),
    )
    .unwrap();
    close(m.g0[0], -1.1);
    close(m.g1[0], 0.9);
    close(m.g2.unwrap()[0], -2.1);
    assert!(meta_gradients(&quad(0.0), &xf, &xf, None).is_err());
}

fn quad_batches(recovery: bool) -> MetaBatches<f64> {
    MetaBatches {
        forget: pts(&[1.0], RiskTag::HighRisk),
        retain: pts(&[-1.0], RiskTag::LowRisk),
        recovery: recovery.then(|| pts(&[2.0], RiskTag::Recovery)),
        full: pts(&[0.5], RiskTag::LowRisk),
    }
}

#[test]
fn outer_update_quad_oracle() {
    let (p, g, loss) = ready2unlearn_update(
        &quad(0.0),
        &quad_batches(true),
        &hyper(0.1, 0.01, 2.0, 3.0, 4.0),
    )
    .unwrap();
    close(g.g3[0], -0.5);
    close(loss, 0.125);
    let direction = 1.1 + 2.0 * 0.9 + 3.0 * -2.1 + 4.0 * -0.5;
    close(p.values()[0], -0.01 * direction);
    close(p.values()[0], 0.054);

    let (p, g, _) = ready2unlearn_update(
        &quad(0.0),
        &quad_batches(true),
        &hyper(0.1, 0.01, 0.0, 0.0, 0.0),
    )
    .unwrap();
    close(p.values()[0], -0.011);
    close(p.values()[0], 0.01 * g.g0[0]);
}

#[test]
fn recovery_term_dropped_without_recovery_batch() {
    let h = hyper(0.1, 0.01, 2.0, 3.0, 4.0);
    let (p, g, _) = ready2unlearn_update(&quad(0.0), &quad_batches(false), &h).unwrap();
    assert!(g.g2.is_none());
    close(p.values()[0], -0.01 * (1.1 + 1.8 - 2.0));
    let (q, _, _) = ready2unlearn_update(
        &quad(0.0),
        &quad_batches(true),
        &hyper(0.1, 0.01, 2.0, 0.0, 4.0),
    )
    .unwrap();
    assert_eq!(p.values(), q.values());
}

proptest::proptest! {
    /// On QUAD with a single forget point, `g0 = (1+α)(θ − x_f)`.
    #[test]
    fn adapted_forget_gradient_scales(theta in -3.0f64..3.0, x in -3.0f64..3.0, alpha in 0.0f64..2.0) {
        let xf = pts(&[x], RiskTag::HighRisk);
        let a = inner_ascent_step(&quad(theta), &xf, alpha).unwrap();
        let m = meta_gradients(&a, &xf, &xf, None).unwrap();
        let expect = (1.0 + alpha) * (theta - x);
        proptest::prop_assert!((m.g0[0] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        let l0 = forward_loss(&quad(theta), &xf).unwrap().mean;
        let l1 = forward_loss(&a, &xf).unwrap().mean;
        proptest::prop_assert!((l1 - (1.0 + alpha) * (1.0 + alpha) * l0).abs() <= 1e-12 * l1.max(1.0));
    }
}

#[test]
fn reweighted_quad_oracle() {
    let batch = Batch::dense(1, vec![1.0, -1.0], vec![0, 0], RiskTag::LowRisk)
        .unwrap()
        .select(&[0, 1]);
    let mut batch = batch;
    batch.tags[0] = RiskTag::HighRisk;
    let h = hyper(0.0, 0.1, 0.0, 0.0, 0.0);
    let kind = TrainerKind::Reweighted { weight: 0.5 };
    let out = baseline_update(&kind, &quad(0.0), &batch, &h, &mut SeededRng::new(0)).unwrap();
    close(out.params.values()[0], -0.025);
}

#[test]
fn baseline_quad_steps() {
    let mut batch = pts(&[1.0, -1.0, 3.0], RiskTag::LowRisk);
    batch.tags[0] = RiskTag::HighRisk;
    let h = hyper(0.0, 0.1, 0.0, 0.0, 0.0);
    let mut rng = SeededRng::new(0);
    let std = baseline_update(&TrainerKind::Standard, &quad(0.0), &batch, &h, &mut rng).unwrap();
    close(std.params.values()[0], 0.1);
    // High-risk gradient is −1; clipping to 0.25 scales its contribution.
    let clip = baseline_update(
        &TrainerKind::Clipped { clip_norm: 0.25 },
        &quad(0.0),
        &batch,
        &h,
        &mut rng,
    )
    .unwrap();
    close(clip.params.values()[0], -0.1 * (-0.25 + 1.0 - 3.0) / 3.0);
    // Per-example clipping to 0.5: gradients (−1, 1, −3) become (−0.5, 0.5, −0.5).
    let dp = TrainerKind::DpClipNoise {
        clip_norm: 0.5,
        noise_multiplier: 0.0,
    };
    let out = baseline_update(&dp, &quad(0.0), &batch, &h, &mut rng).unwrap();
    close(out.params.values()[0], -0.1 * (-0.5 / 3.0));
    let gold = TrainerKind::Goldfish { drop_prob: 1.0 };
    let out = baseline_update(&gold, &quad(0.0), &batch, &h, &mut rng).unwrap();
    close(out.params.values()[0], -0.1 * (1.0 - 3.0) / 2.0);
    let only_high = pts(&[1.0], RiskTag::HighRisk);
    let out = baseline_update(&gold, &quad(0.0), &only_high, &h, &mut rng).unwrap();
    assert!(out.skipped.is_some() && out.loss.is_none());
    assert_eq!(out.params.values()[0], 0.0);
}

#[test]
fn trainer_scalar_ranges() {
    assert!(TrainerKind::Goldfish { drop_prob: 1.5 }.validate().is_err());
    assert!(TrainerKind::Noisy { sigma: -1.0 }.validate().is_err());
    assert!(TrainerKind::Clipped { clip_norm: 0.0 }.validate().is_err());
    assert!(TrainerKind::Clipped {
        clip_norm: f64::INFINITY
    }
    .validate()
    .is_ok());
    assert!(TrainerKind::DpClipNoise {
        clip_norm: f64::INFINITY,
        noise_multiplier: 1.0
    }
    .validate()
    .is_err());
    assert!(TrainerKind::EmbedNoise { alpha: f64::NAN }
        .validate()
        .is_err());
    assert!(hyper(0.1, 0.0, 1.0, 1.0, 1.0).validate().is_err());
    assert!(hyper(-0.1, 0.1, 1.0, 1.0, 1.0).validate().is_err());
}

fn blob_partition() -> RiskPartition<f64> {
    let d = synth_blobs(3, 12, 4, 3.0, &mut SeededRng::new(5)).unwrap();
    partition_by_class(&d, 1).unwrap()
}

fn lm_partition() -> RiskPartition<f64> {
    let c = build_char_corpus("abcabd abcabe abdcae").unwrap();
    let d: LabeledDataset<f64> = window_dataset(&c, 3).unwrap();
    let n = d.len();
    let forget = d.subset("f", &(0..n / 3).collect::<Vec<_>>()).unwrap();
    let retain = d.subset("r", &(n / 3..n).collect::<Vec<_>>()).unwrap();
    RiskPartition::new(forget, retain, None, None).unwrap()
}

fn neutral_kinds() -> Vec<TrainerKind<f64>> {
    vec![
        TrainerKind::Reweighted { weight: 1.0 },
        TrainerKind::Noisy { sigma: 0.0 },
        TrainerKind::Clipped {
            clip_norm: f64::INFINITY,
        },
        TrainerKind::Goldfish { drop_prob: 0.0 },
        TrainerKind::DpClipNoise {
            clip_norm: f64::INFINITY,
            noise_multiplier: 0.0,
        },
    ]
}

#[test]
fn neutral_baselines_match_standard_bit_for_bit() {
    let cases = [
        (
            blob_partition(),
            ModelSpec::classifier(&[4, 5, 3]),
            neutral_kinds(),
        ),
        (
            lm_partition(),
            ModelSpec::char_lm(6, 3, 2, 4),
            vec![
                TrainerKind::EmbedNoise { alpha: 0.0 },
                TrainerKind::Goldfish { drop_prob: 0.0 },
                TrainerKind::Reweighted { weight: 1.0 },
            ],
        ),
    ];
    let h = MetaHyper {
        eta: 0.05,
        batch_full: 8,
        ..MetaHyper::default()
    };
    for (part, spec, kinds) in cases {
        let p = init_params(&spec, &mut SeededRng::new(9)).unwrap();
        let ctx = StepContext {
            epoch: 0,
            total_epochs: 2,
        };
        let mut base_rngs = TrainRngs::split(&mut SeededRng::new(4));
        let (reference, _) =
            baseline_step(&TrainerKind::Standard, &p, &part, &h, ctx, &mut base_rngs).unwrap();
        for kind in kinds {
            let mut rngs = TrainRngs::split(&mut SeededRng::new(4));
            let (out, _) = baseline_step(&kind, &p, &part, &h, ctx, &mut rngs).unwrap();
            assert_eq!(
                out.params.values(),
                reference.params.values(),
                "{}",
                kind.name()
            );
            assert_eq!(rngs.data, base_rngs.data, "{}", kind.name());

            let sched = Schedule::constant(kind.clone(), 2).unwrap();
            let std_sched = Schedule::constant(TrainerKind::Standard, 2).unwrap();
            let (a, la) = train(
                &spec,
                &part,
                &sched,
                &h,
                &mut SeededRng::new(1),
                TrainOptions::default(),
            )
            .unwrap();
            let (b, lb) = train(
                &spec,
                &part,
                &std_sched,
                &h,
                &mut SeededRng::new(1),
                TrainOptions::default(),
            )
            .unwrap();
            assert_eq!(a.values(), b.values(), "{}", kind.name());
            assert_eq!(la.rows.len(), lb.rows.len());
        }
    }
}

#[test]
fn train_is_deterministic_and_logs_increasing_steps() {
    let part = blob_partition();
    let spec = ModelSpec::classifier(&[4, 5, 3]);
    let h = MetaHyper {
        alpha: 0.5,
        eta: 0.05,
        batch_full: 8,
        batch_forget: 4,
        batch_retain: 4,
        ..MetaHyper::default()
    };
    let sched = Schedule::prepared_tail(4, 2).unwrap();
    let opts = TrainOptions {
        eval: EvalPolicy::Every(3),
    };
    let (a, la) = train(&spec, &part, &sched, &h, &mut SeededRng::new(2), opts).unwrap();
    let (b, lb) = train(&spec, &part, &sched, &h, &mut SeededRng::new(2), opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_eq!(a.role(), Role::Prepared);
    assert_eq!(la.rows.len(), 4 * part.full.len().div_ceil(8));
    assert!(la.rows.windows(2).all(|w| w[0].step < w[1].step));
    assert_eq!(la.rows[0].trainer, "standard");
    assert_eq!(la.rows.last().unwrap().trainer, "ready2unlearn");
    assert!(la.rows.last().unwrap().forget_acc.is_some());
    assert!(Schedule::<f64>::prepared_tail(4, 5).is_err());
}

#[test]
fn phased_second_half_sees_no_high_risk() {
    let part = blob_partition();
    let spec = ModelSpec::classifier(&[4, 5, 3]);
    let h = MetaHyper {
        eta: 0.05,
        batch_full: 8,
        ..MetaHyper::default()
    };
    let sched = Schedule::constant(TrainerKind::Phased, 4).unwrap();
    let (_, log) = train(
        &spec,
        &part,
        &sched,
        &h,
        &mut SeededRng::new(3),
        TrainOptions::default(),
    )
    .unwrap();
    assert!(log
        .rows
        .iter()
        .filter(|r| r.epoch >= 2)
        .all(|r| r.high_risk_seen == 0));
    assert!(log
        .rows
        .iter()
        .filter(|r| r.epoch < 2)
        .any(|r| r.high_risk_seen > 0));
}

#[test]
fn outer_loop_runs_exactly_n_steps() {
    let part = blob_partition();
    let spec = ModelSpec::classifier(&[4, 5, 3]);
    let p = init_params(&spec, &mut SeededRng::new(0)).unwrap();
    let mut h = MetaHyper {
        alpha: 0.1,
        eta: 0.01,
        outer_steps: 3,
        ..MetaHyper::default()
    };
    let mut r1 = SeededRng::new(8);
    let looped = run_outer_loop(&p, &part, &h, &mut r1).unwrap();
    let mut r2 = SeededRng::new(8);
    let mut manual = p.clone();
    for _ in 0..3 {
        manual = ready2unlearn_step(&manual, &part, &h, &mut r2).unwrap().0;
    }
    assert_eq!(looped.values(), manual.values());
    assert_eq!(looped.role(), Role::Prepared);
    h.outer_steps = 0;
    assert_eq!(
        run_outer_loop(&p, &part, &h, &mut r1).unwrap().values(),
        p.values()
    );
}
