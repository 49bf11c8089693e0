mod common;

use common::*;
use fsgnn::model::{
    forward, hidden_representation, hop_normalize, loss_and_grads, softmax_alpha, FsgnnParams,
    Mode, ModelConfig, Variant,
};
use fsgnn::DenseMatrix;
use proptest::prelude::*;

#[test]
fn gradients_match_finite_differences() {
    let mut checked = 0;
    for variant in Variant::ALL {
        for seed in 0..25 {
            let inst = tiny_instance(seed, variant, 0.0);
            let err = gradient_error(&inst);
            assert!(err < 1e-6, "{variant} seed {seed}: relative error {err:e}");
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn zero_rows_pass_through_hop_norm_backward() {
    // a zero input row with zero biases gives zero branch rows, where the
    // normalization is not differentiable; the gradient must still be finite
    let mut inst = tiny_instance(99, Variant::Full, 0.0);
    let cols = inst.inputs[0].cols();
    for m in inst.inputs.iter_mut() {
        *m = DenseMatrix::from_fn(
            m.rows(),
            cols,
            |i, j| if i == 0 { 0.0 } else { m.get(i, j) },
        );
    }
    for b in inst.params.b0.iter_mut() {
        b.fill(0.0);
    }
    let (_, grads) = loss_and_grads(
        &inst.params,
        &inst.cfg,
        &inst.inputs,
        &inst.targets,
        &mut rng(0),
    )
    .unwrap();
    assert!(grads.is_finite());
}

#[test]
fn shifting_selection_scores_leaves_gradients_unchanged() {
    for variant in [Variant::Full, Variant::SharedW0, Variant::NoHopnorm] {
        for seed in 0..10 {
            let inst = tiny_instance(seed, variant, 0.0);
            let mut shifted = inst.params.clone();
            shifted.raw_alpha.iter_mut().for_each(|a| *a += 3.25);
            let g = |p: &FsgnnParams| {
                flatten(
                    &loss_and_grads(p, &inst.cfg, &inst.inputs, &inst.targets, &mut rng(0))
                        .unwrap()
                        .1,
                )
            };
            let (a, b) = (g(&inst.params), g(&shifted));
            let worst = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-12, "{variant} seed {seed}: {worst:e}");
        }
    }
}

#[test]
fn doubling_gamma_doubles_hidden_representation() {
    for variant in Variant::ALL {
        for seed in 0..5 {
            let inst = tiny_instance(seed, variant, 0.0);
            let h = hidden_representation(&inst.params, &inst.cfg, &inst.inputs).unwrap();
            let cfg2 = ModelConfig {
                gamma: 2.0 * inst.cfg.gamma,
                ..inst.cfg.clone()
            };
            let h2 = hidden_representation(&inst.params, &cfg2, &inst.inputs).unwrap();
            let doubled = DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| 2.0 * h.get(i, j));
            assert!(h2.max_abs_diff(&doubled) < 1e-12);
        }
    }
}

#[test]
fn shared_variant_equals_full_with_tied_weights() {
    for seed in 0..10 {
        let inst = tiny_instance(seed, Variant::Full, 0.0);
        let shared_cfg = ModelConfig {
            variant: Variant::SharedW0,
            ..inst.cfg.clone()
        };
        let mut full = inst.params.clone();
        let (w, b) = (full.w0[0].clone(), full.b0[0].clone());
        full.w0.iter_mut().for_each(|m| *m = w.clone());
        full.b0.iter_mut().for_each(|v| *v = b.clone());
        let shared = FsgnnParams {
            w0: vec![w],
            b0: vec![b],
            ..full.clone()
        };
        let (zf, _) = forward(&full, &inst.cfg, &inst.inputs, Mode::Eval).unwrap();
        let (zs, _) = forward(&shared, &shared_cfg, &inst.inputs, Mode::Eval).unwrap();
        assert_eq!(zf, zs);
    }
}

/// Direct evaluation of the model on explicit loops.
fn straight_line_logits(inst: &Instance) -> Vec<Vec<f64>> {
    let (cfg, p) = (&inst.cfg, &inst.params);
    let alpha = match cfg.variant {
        Variant::NoSoftselect => p.raw_alpha.clone(),
        _ => {
            let e: Vec<f64> = p.raw_alpha.iter().map(|a| a.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
    };
    let rows = inst.inputs[0].rows();
    let d = inst.inputs[0].cols();
    let h = cfg.hidden;
    let mut out = Vec::new();
    for i in 0..rows {
        let mut hidden = Vec::new();
        for (j, x) in inst.inputs.iter().enumerate() {
            let k = if cfg.variant == Variant::SharedW0 {
                0
            } else {
                j
            };
            let mut t: Vec<f64> = (0..h)
                .map(|c| p.b0[k][c] + (0..d).map(|q| x.get(i, q) * p.w0[k].get(q, c)).sum::<f64>())
                .collect();
            if cfg.variant != Variant::NoHopnorm {
                let n = norm(&t);
                t = if n < 1e-12 {
                    vec![0.0; h]
                } else {
                    t.iter().map(|v| v / n).collect()
                };
            }
            hidden.extend(t.iter().map(|v| (cfg.gamma * alpha[j] * v).max(0.0)));
        }
        out.push(
            (0..cfg.classes)
                .map(|c| {
                    p.b2[c]
                        + hidden
                            .iter()
                            .enumerate()
                            .map(|(q, v)| v * p.w2.get(q, c))
                            .sum::<f64>()
                })
                .collect(),
        );
    }
    out
}

#[test]
fn forward_matches_straight_line_evaluation() {
    for variant in Variant::ALL {
        for seed in 0..10 {
            let inst = tiny_instance(seed, variant, 0.0);
            let (z, _) = forward(&inst.params, &inst.cfg, &inst.inputs, Mode::Eval).unwrap();
            let want = straight_line_logits(&inst);
            assert!(
                max_abs_diff(&to_rows(&z), &want) < 1e-10,
                "{variant} seed {seed}"
            );
        }
    }
}

#[test]
fn train_and_eval_agree_without_dropout() {
    for variant in Variant::ALL {
        let inst = tiny_instance(7, variant, 0.0);
        let (eval, _) = forward(&inst.params, &inst.cfg, &inst.inputs, Mode::Eval).unwrap();
        let mut r = rng(1);
        let (train, cache) =
            forward(&inst.params, &inst.cfg, &inst.inputs, Mode::Train(&mut r)).unwrap();
        assert_eq!(eval, train);
        assert_eq!(cache.unwrap().logits(), &eval);
    }
}

#[test]
fn dropout_changes_training_logits_only() {
    let inst = tiny_instance(8, Variant::Full, 0.5);
    let (e1, _) = forward(&inst.params, &inst.cfg, &inst.inputs, Mode::Eval).unwrap();
    let (e2, _) = forward(&inst.params, &inst.cfg, &inst.inputs, Mode::Eval).unwrap();
    assert_eq!(e1, e2);
    let mut r = rng(2);
    let (t, _) = forward(&inst.params, &inst.cfg, &inst.inputs, Mode::Train(&mut r)).unwrap();
    assert_ne!(t, e1);
}

#[test]
fn fixed_seed_gives_bit_identical_logits_and_gradients() {
    for variant in Variant::ALL {
        let inst = tiny_instance(11, variant, 0.3);
        let run = || {
            let params = FsgnnParams::init(&inst.cfg, inst.inputs[0].cols(), 42).unwrap();
            let (l, g) =
                loss_and_grads(&params, &inst.cfg, &inst.inputs, &inst.targets, &mut rng(5))
                    .unwrap();
            let bits: Vec<u64> = flatten(&g).iter().map(|v| v.to_bits()).collect();
            (l.to_bits(), bits)
        };
        assert_eq!(run(), run());
    }
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(
        raw in prop::collection::vec(-30.0f64..30.0, 1..20),
        shift in -50.0f64..50.0,
    ) {
        let a = softmax_alpha(&raw);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let shifted: Vec<f64> = raw.iter().map(|r| r + shift).collect();
        let b = softmax_alpha(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn hop_norm_gives_unit_rows_and_is_idempotent(
        seed in any::<u64>(), rows in 1usize..12, cols in 1usize..10, scale in 1e-6f64..1e6,
    ) {
        let mut r = rng(seed);
        let h = random_matrix(rows, cols, &mut r);
        let h = DenseMatrix::from_fn(rows, cols, |i, j| if i == 0 { 0.0 } else { scale * h.get(i, j) });
        let n = hop_normalize(&h);
        prop_assert_eq!(n.row(0).iter().filter(|v| **v != 0.0).count(), 0);
        for i in 1..rows {
            prop_assert!((norm(n.row(i)) - 1.0).abs() <= 1e-12);
        }
        prop_assert!(hop_normalize(&n).max_abs_diff(&n) <= 1e-12);
    }
}
