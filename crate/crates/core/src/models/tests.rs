use super::*;

fn zeros(spec: ModelSpec) -> ParamState<f64> {
    let n = Layout::for_spec(&spec).total();
    ParamState::from_values(spec, Vector::zeros(n), Role::Initial).unwrap()
}

fn set(p: &ParamState<f64>, name: &str, vals: &[f64]) -> ParamState<f64> {
    let e = p.layout().entry(name).unwrap().clone();
    let mut v = p.values().clone();
    v[e.range()].copy_from_slice(vals);
    p.with_values(v, p.role()).unwrap()
}

/// Linear 1→k classifier whose logits equal its output bias for input 0.
fn bias_classifier(bias: &[f64]) -> ParamState<f64> {
    let p = zeros(ModelSpec::classifier(&[1, bias.len()]));
    set(&p, "layer0.bias", bias)
}

fn one_input(label: usize) -> Batch<f64> {
    Batch::dense(1, vec![0.0], vec![label], RiskTag::LowRisk).unwrap()
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let spec = ModelSpec::classifier(&[784, 256, 10]);
    let a: ParamState<f64> = init_params(&spec, &mut SeededRng::new(3)).unwrap();
    let b: ParamState<f64> = init_params(&spec, &mut SeededRng::new(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.role(), Role::Initial);
    for name in ["layer0.bias", "layer1.bias"] {
        let e = a.layout().entry(name).unwrap();
        assert!(a.values()[e.range()].iter().all(|&v| v == 0.0));
    }
    let bound = (6.0f64 / 1040.0).sqrt();
    assert!((bound - 0.07596).abs() < 1e-5);
    let w = a.layout().entry("layer0.weight").unwrap();
    let vals = &a.values()[w.range()];
    assert!(vals.iter().all(|v| v.abs() <= bound));
    let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(
        max > 0.99 * bound,
        "draws should fill the interval, max {max}"
    );
}

#[test]
fn uniform_logits_give_log_classes() {
    let p = zeros(ModelSpec::classifier(&[3, 10]));
    let batch = Batch::dense(3, vec![0.2, 0.4, 0.9], vec![4], RiskTag::LowRisk).unwrap();
    let r = forward_loss(&p, &batch).unwrap();
    assert!((r.mean - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_loss_vanishes() {
    let p = bias_classifier(&[60.0, 0.0, 0.0]);
    let r = forward_loss(&p, &one_input(0)).unwrap();
    assert!(r.mean >= 0.0 && r.mean < 1e-20);
}

#[test]
fn two_class_hand_softmax() {
    let p = bias_classifier(&[0.0, 0.0]);
    let r = forward_loss(&p, &one_input(0)).unwrap();
    assert!((r.mean - 2f64.ln()).abs() < 1e-15);
    let g = grad(&p, &one_input(0)).unwrap();
    let b = p.layout().entry("layer0.bias").unwrap();
    assert_eq!(&g[b.range()], &[-0.5, 0.5]);
}

#[test]
fn duplicating_batch_leaves_gradient_unchanged() {
    let spec = ModelSpec::classifier(&[4, 5, 3]);
    let p: ParamState<f64> = init_params(&spec, &mut SeededRng::new(11)).unwrap();
    let x = vec![0.1, 0.7, 0.3, 0.9, 0.5, 0.2, 0.8, 0.4];
    let once = Batch::dense(4, x.clone(), vec![2, 0], RiskTag::LowRisk).unwrap();
    let twice = once.concat(&once).unwrap();
    let g1 = grad(&p, &once).unwrap();
    let g2 = grad(&p, &twice).unwrap();
    for (a, b) in g1.iter().zip(g2.iter()) {
        assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()));
    }
}

#[test]
fn mean_matches_per_example() {
    let spec = ModelSpec::char_lm(5, 3, 2, 4);
    let p: ParamState<f64> = init_params(&spec, &mut SeededRng::new(2)).unwrap();
    let batch = Batch::tokens(
        3,
        vec![0, 1, 2, 3, 4, 0, 1, 1, 1],
        vec![4, 2, 0],
        RiskTag::LowRisk,
    )
    .unwrap();
    let r = forward_loss(&p, &batch).unwrap();
    let mean = r.per_example.iter().sum::<f64>() / 3.0;
    assert!((r.mean - mean).abs() < 1e-12);
    assert!(r.per_example.iter().all(|&l| l >= 0.0));
}

#[test]
fn dimension_errors() {
    let p = zeros(ModelSpec::classifier(&[3, 2]));
    let wrong_width = Batch::dense(2, vec![0.0, 0.0], vec![0], RiskTag::LowRisk).unwrap();
    assert!(matches!(
        forward_loss(&p, &wrong_width),
        Err(Error::Dimension { .. })
    ));
    let bad_label = Batch::dense(3, vec![0.0; 3], vec![2], RiskTag::LowRisk).unwrap();
    assert!(matches!(grad(&p, &bad_label), Err(Error::Dimension { .. })));
    let lm = zeros(ModelSpec::char_lm(3, 2, 2, 2));
    let bad_token = Batch::tokens(2, vec![0, 3], vec![0], RiskTag::LowRisk).unwrap();
    assert!(forward_loss(&lm, &bad_token).is_err());
}

#[test]
fn predict_argmax_and_ties() {
    let p = bias_classifier(&[3.0, 1.0, 2.0]);
    let inputs = Inputs::Dense {
        dim: 1,
        values: vec![0.0],
    };
    assert_eq!(predict(&p, &inputs).unwrap(), Prediction::Labels(vec![0]));
    let tie = bias_classifier(&[1.0, 1.0]);
    assert_eq!(predict(&tie, &inputs).unwrap(), Prediction::Labels(vec![0]));
    // Shifting every logit by a constant changes nothing.
    let shifted = bias_classifier(&[103.0, 101.0, 102.0]);
    assert_eq!(
        predict(&shifted, &inputs).unwrap(),
        Prediction::Labels(vec![0])
    );
}

#[test]
fn lm_distributions_are_normalised() {
    let spec = ModelSpec::char_lm(7, 4, 3, 5);
    let p: ParamState<f64> = init_params(&spec, &mut SeededRng::new(4)).unwrap();
    let inputs = Inputs::Tokens {
        context: 4,
        ids: vec![0, 1, 2, 3, 6, 6, 5, 4],
    };
    match predict(&p, &inputs).unwrap() {
        Prediction::Distributions(d) => {
            assert_eq!(d.len(), 2);
            for row in d {
                assert_eq!(row.len(), 7);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        other => panic!("expected distributions, got {other:?}"),
    }
}

#[test]
fn quadratic_has_no_predictions() {
    let p = zeros(ModelSpec::quadratic(1));
    let inputs = Inputs::Dense {
        dim: 1,
        values: vec![1.0],
    };
    assert!(matches!(predict(&p, &inputs), Err(Error::ModelKind { .. })));
}

#[test]
fn per_token_loss_uniform_model() {
    let p = zeros(ModelSpec::char_lm(27, 2, 3, 4));
    let text: Vec<u32> = vec![0, 5, 9, 26, 3, 3];
    let losses = per_token_loss(&p, &text).unwrap();
    assert_eq!(losses.len(), 4);
    for (i, t) in losses.iter().enumerate() {
        assert_eq!(t.position, i + 2);
        assert_eq!(t.token, text[i + 2]);
        assert!((t.loss - 27f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn per_token_loss_certain_and_fixed_probability() {
    let certain = set(
        &zeros(ModelSpec::char_lm(2, 1, 1, 1)),
        "output.bias",
        &[80.0, 0.0],
    );
    for t in per_token_loss(&certain, &[0, 0, 0]).unwrap() {
        assert!(t.loss < 1e-20);
    }
    let p = set(
        &zeros(ModelSpec::char_lm(2, 2, 1, 1)),
        "output.bias",
        &[0.8f64.ln(), 0.2f64.ln()],
    );
    for t in per_token_loss(&p, &[0, 0, 0, 0, 0]).unwrap() {
        assert!((t.loss - 0.22314).abs() < 1e-5);
        assert!((t.loss - (1.0f64 / 0.8).ln()).abs() < 1e-12);
    }
}

#[test]
fn per_token_loss_rejects_short_text() {
    let p = zeros(ModelSpec::char_lm(3, 4, 1, 1));
    assert!(matches!(
        per_token_loss(&p, &[0, 1, 2, 0]),
        Err(Error::Input(_))
    ));
}

#[test]
fn f32_models_run() {
    let spec = ModelSpec::classifier(&[2, 3, 2]);
    let p: ParamState<f32> = init_params(&spec, &mut SeededRng::new(1)).unwrap();
    let batch = Batch::dense(2, vec![0.5f32, 0.25], vec![1], RiskTag::LowRisk).unwrap();
    let g = grad(&p, &batch).unwrap();
    assert_eq!(g.len(), p.values().len());
}
