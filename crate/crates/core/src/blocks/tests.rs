use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_seq(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Tensor<f32> {
    Tensor::new(vec![t, d], (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn small(variant: Variant, d: usize) -> BlockConfig {
    BlockConfig::new(variant, d).with_hidden(3).with_reduction(4)
}

fn logits(head: &Head, x: &Tensor<f32>, mask: &[bool]) -> Vec<f32> {
    head.logits(x, mask).unwrap()
}

fn close(a: &[f32], b: &[f32], tol: f32) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Closed-form trainable parameter counts, written out independently of
/// the layout code.
fn expected_params(cfg: &BlockConfig) -> usize {
    let d = cfg.dim;
    let k = (d / cfg.reduction).max(1);
    let out = 2 * d + 2;
    let channel_mlp = 2 * d * k + k + d;
    let att = d + if cfg.projected_attention { d * d + d } else { 0 };
    let fc = d * d + d;
    match cfg.variant {
        Variant::DenseFirstToken | Variant::MaxPool | Variant::AvgPool => out,
        Variant::LstmHead { layers } => {
            let h = cfg.hidden;
            let first = 2 * 4 * h * (d + h + 1);
            let second = if layers == 2 { 2 * 4 * h * (2 * h + h + 1) } else { 0 };
            first + second + 2 * (2 * h) + 2
        }
        Variant::Attention => att + out,
        Variant::Rcab => channel_mlp + out,
        Variant::Cbam => channel_mlp + 2 * 7 + 1 + out,
        Variant::Csar => channel_mlp + (3 * d + 1) + (2 * d * d + d) + out,
        Variant::Ram => channel_mlp + 3 * d + d + out,
        Variant::Axel => att + fc + 3 + 1 + out,
        Variant::AxelAblation(a) => match a {
            Ablation::AttAvgFc | Ablation::AttMaxFc => att + fc + 2 + 1 + out,
            Ablation::AttAvgFcMaxFc => att + 2 * fc + 3 + 1 + out,
            Ablation::SumFusion => att + fc + out,
            Ablation::TanhAct => att + fc + 3 + 1 + out,
            Ablation::VarFc => att + fc + 4 + 1 + out,
        },
    }
}

#[test]
fn param_counts_match_closed_forms() {
    for variant in Variant::all() {
        for (d, h, r) in [(1, 1, 16), (4, 3, 2), (16, 5, 4), (33, 8, 16)] {
            let mut cfg = BlockConfig::new(variant, d).with_hidden(h).with_reduction(r);
            for projected in [false, true] {
                cfg.projected_attention = projected;
                let head = Head::build(&cfg, 0).unwrap();
                assert_eq!(head.param_count(), expected_params(&cfg), "{variant} d={d} h={h} r={r} proj={projected}");
            }
        }
    }
}

#[test]
fn documented_param_counts() {
    let dense = Head::build(&BlockConfig::new(Variant::DenseFirstToken, 4), 0).unwrap();
    assert_eq!(dense.param_count(), 10);

    let axel = Head::build(&BlockConfig::new(Variant::Axel, 1024), 0).unwrap();
    assert_eq!(axel.param_count(), 1024 * 1024 + 4 * 1024 + 6);
    assert!((1_000_000..1_100_000).contains(&axel.param_count()));

    // Without biases the recurrent part is 4(d+h)h per direction.
    let cfg = BlockConfig::new(Variant::LstmHead { layers: 1 }, 768).with_hidden(128);
    let lstm = Head::build(&cfg, 0).unwrap();
    let biases = 2 * 4 * 128;
    assert_eq!(lstm.param_count(), 4 * (768 + 128) * 128 * 2 + biases + 2 * 256 + 2);
}

#[test]
fn build_is_deterministic_and_biases_start_at_zero() {
    for variant in Variant::all() {
        let cfg = small(variant, 6);
        let a = Head::build(&cfg, 42).unwrap();
        assert_eq!(a, Head::build(&cfg, 42).unwrap());
        assert_ne!(a.params(), Head::build(&cfg, 43).unwrap().params());
        for (spec, p) in param_specs(&cfg).iter().zip(a.params()) {
            match spec.fans {
                None => assert!(p.data().iter().all(|&v| v == 0.0), "{}", spec.name),
                Some((i, o)) => {
                    let bound = glorot_bound(i, o) as f32;
                    assert!(p.data().iter().all(|v| v.abs() <= bound), "{}", spec.name);
                }
            }
        }
    }
}

#[test]
fn config_validation_and_json() {
    assert!(Head::build(&BlockConfig::new(Variant::Axel, 0), 0).is_err());
    assert!(Head::build(&BlockConfig::new(Variant::LstmHead { layers: 3 }, 4), 0).is_err());
    assert!(Head::build(&BlockConfig::new(Variant::Rcab, 4).with_reduction(0), 0).is_err());
    assert!(Head::build(&BlockConfig::new(Variant::MaxPool, 4).with_dropout(1.0), 0).is_err());

    let cfg: BlockConfig = serde_json::from_str(r#"{"variant":{"lstm_head":{"layers":2}},"dim":8}"#).unwrap();
    assert_eq!(cfg.variant, Variant::LstmHead { layers: 2 });
    assert_eq!((cfg.hidden, cfg.reduction, cfg.dropout), (128, 16, 0.0));
    let cfg: BlockConfig = serde_json::from_str(r#"{"variant":{"axel_ablation":"sum_fusion"},"dim":8}"#).unwrap();
    assert_eq!(cfg.variant, Variant::AxelAblation(Ablation::SumFusion));
    for variant in Variant::all() {
        let cfg = BlockConfig::new(variant, 3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<BlockConfig>(&text).unwrap(), cfg);
    }
    assert!(serde_json::from_str::<BlockConfig>(r#"{"variant":"axel","dim":8,"extra":1}"#).is_err());
}

#[test]
fn dense_first_token_examples() {
    let mut head = Head::build(&BlockConfig::new(Variant::DenseFirstToken, 3), 1).unwrap();
    // Selector picking features 0 and 2.
    head.set_param("out.w", Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap())
        .unwrap();
    head.set_param("out.b", Tensor::vector(vec![0.5, -0.5])).unwrap();
    let x = Tensor::from_rows(&[vec![2.0, 7.0, -3.0], vec![9.0, 9.0, 9.0]]).unwrap();
    assert_eq!(logits(&head, &x, &[true, true]), [2.5, -3.5]);
    let other = Tensor::from_rows(&[vec![2.0, 7.0, -3.0], vec![-4.0, 1.0, 0.0]]).unwrap();
    assert_eq!(logits(&head, &other, &[true, true]), [2.5, -3.5]);

    head.set_param("out.w", Tensor::zeros(&[3, 2])).unwrap();
    assert_eq!(logits(&head, &x, &[true, true]), [0.5, -0.5]);
}

#[test]
fn pool_head_examples() {
    let mut max = Head::build(&BlockConfig::new(Variant::MaxPool, 2), 3).unwrap();
    let mut avg = Head::build(&BlockConfig::new(Variant::AvgPool, 2), 3).unwrap();
    let w = Tensor::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]).unwrap();
    for h in [&mut max, &mut avg] {
        h.set_param("out.w", w.clone()).unwrap();
        h.set_param("out.b", Tensor::vector(vec![0.1, 0.2])).unwrap();
    }
    let constant = Tensor::from_rows(&vec![vec![0.3, -0.7]; 4]).unwrap();
    assert!(close(&logits(&max, &constant, &[true; 4]), &logits(&avg, &constant, &[true; 4]), 1e-6));

    // Hand case: max = [3, 4], avg = [2, 1].
    let x = Tensor::from_rows(&[vec![1.0, 4.0], vec![3.0, -2.0]]).unwrap();
    assert!(close(&logits(&max, &x, &[true, true]), &[3.0 + 8.0 + 0.1, -3.0 + 2.0 + 0.2], 1e-6));
    assert!(close(&logits(&avg, &x, &[true, true]), &[2.0 + 2.0 + 0.1, -2.0 + 0.5 + 0.2], 1e-6));
}

#[test]
fn lstm_head_examples() {
    let cfg = BlockConfig::new(Variant::LstmHead { layers: 1 }, 1).with_hidden(1);
    let mut head = Head::build(&cfg, 5).unwrap();
    let x = Tensor::from_rows(&[vec![0.7]]).unwrap();

    let zeroed: Vec<Tensor<f32>> = head.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut zero = head.with_params(zeroed).unwrap();
    zero.set_param("out.b", Tensor::vector(vec![0.25, -1.5])).unwrap();
    assert_eq!(logits(&zero, &x, &[true]), [0.25, -1.5]);

    // T = 1: each direction is one cell step from zero state.
    let gates_f = [0.5f64, -0.3, 0.8, 0.2];
    let gates_b = [-0.4f64, 0.6, 0.1, 0.9];
    let bias_f = [0.05f64, 0.1, -0.1, 0.0];
    let t32 = |v: &[f64]| Tensor::new(vec![1, 4], v.iter().map(|&x| x as f32).collect()).unwrap();
    head.set_param("lstm1.fwd.w_ih", t32(&gates_f)).unwrap();
    head.set_param("lstm1.bwd.w_ih", t32(&gates_b)).unwrap();
    head.set_param("lstm1.fwd.b", Tensor::vector(bias_f.map(|b| b as f32).to_vec())).unwrap();
    head.set_param("out.w", Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let cell = |w: &[f64], b: &[f64]| {
        let z: Vec<f64> = (0..4).map(|i| w[i] * 0.7 + b[i]).collect();
        let c = sig(z[0]) * z[2].tanh();
        sig(z[3]) * c.tanh()
    };
    let expected = [cell(&gates_f, &bias_f) as f32, cell(&gates_b, &[0.0; 4]) as f32];
    assert!(close(&logits(&head, &x, &[true]), &expected, 1e-6));
}

#[test]
fn attention_head_examples() {
    let mut head = Head::build(&BlockConfig::new(Variant::Attention, 2), 2).unwrap();
    head.set_param("out.w", Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();

    let one = Tensor::from_rows(&[vec![0.4, -2.0]]).unwrap();
    assert!(close(&logits(&head, &one, &[true]), &[0.4, -2.0], 1e-6));

    head.set_param("att.v", Tensor::zeros(&[2, 1])).unwrap();
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![100.0, 100.0]]).unwrap();
    assert!(close(&logits(&head, &x, &[true, true, false]), &[2.0, 3.0], 1e-6));

    // e = [ln 3, 0] gives alpha = [3/4, 1/4].
    head.set_param("att.v", Tensor::new(vec![2, 1], vec![3f32.ln(), 0.0]).unwrap()).unwrap();
    let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert!(close(&logits(&head, &eye, &[true, true]), &[0.75, 0.25], 1e-6));
}

#[test]
fn rcab_with_zero_bottleneck_halves_the_mean() {
    let mut head = Head::build(&small(Variant::Rcab, 4), 8).unwrap();
    head.set_param("ca.fc2.w", Tensor::zeros(&[1, 4])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_seq(&mut rng, 5, 4);
    let mean: Vec<f32> = (0..4).map(|j| (0..5).map(|t| x.get2(t, j)).sum::<f32>() / 5.0).collect();
    let w = head.param("out.w").unwrap();
    let expected: Vec<f32> = (0..2).map(|c| (0..4).map(|j| 0.5 * mean[j] * w.get2(j, c)).sum::<f32>()).collect();
    assert!(close(&logits(&head, &x, &[true; 5]), &expected, 1e-6));
}

#[test]
fn every_head_handles_short_and_long_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in Variant::all() {
        for (t, d) in [(1, 1), (1, 5), (2, 3), (9, 4)] {
            let head = Head::build(&small(variant, d), 0).unwrap();
            let x = random_seq(&mut rng, t, d);
            let out = logits(&head, &x, &vec![true; t]);
            assert_eq!(out.len(), 2, "{variant}");
            assert!(out.iter().all(|v| v.is_finite()), "{variant}");
        }
    }
}

#[test]
fn errors_on_bad_inputs() {
    let head = Head::build(&small(Variant::Axel, 3), 0).unwrap();
    let x = Tensor::zeros(&[2, 4]);
    assert!(matches!(head.logits(&x, &[true, true]), Err(BlockError::Dim { expected: 3, got: 4 })));
    let x = Tensor::zeros(&[2, 3]);
    assert!(matches!(
        head.logits(&x, &[false, false]),
        Err(BlockError::Tensor(TensorError::EmptySequence { .. }))
    ));
    assert!(head.logits(&x, &[true]).is_err());
}

#[test]
fn axel_shared_weights_on_constant_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let row: Vec<f32> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = Tensor::from_rows(&vec![row; 4]).unwrap();
    let head = Head::build(&small(Variant::Axel, 5), 2).unwrap();
    let ch = axel_channels_of(&head, &x, &[true; 4]).unwrap();
    assert_eq!(ch.len(), 3);
    assert_eq!(ch[1], ch[2]);

    let untied = Head::build(&small(Variant::AxelAblation(Ablation::AttAvgFcMaxFc), 5), 2).unwrap();
    let ch = axel_channels_of(&untied, &x, &[true; 4]).unwrap();
    let gap: f32 = ch[1].iter().zip(&ch[2]).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap > 1e-3, "untied branches coincide: {gap}");
}

#[test]
fn sum_fusion_equals_unit_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sum = Head::build(&small(Variant::AxelAblation(Ablation::SumFusion), 6), 9).unwrap();
    let mut conv = Head::build(&small(Variant::Axel, 6), 9).unwrap();
    for name in ["att.v", "fc.w", "fc.b", "out.w", "out.b"] {
        conv.set_param(name, sum.param(name).unwrap().clone()).unwrap();
    }
    conv.set_param("fuse.w", Tensor::new(vec![1, 3, 1], vec![1.0; 3]).unwrap()).unwrap();
    for _ in 0..20 {
        let t = rng.gen_range(1..7);
        let x = random_seq(&mut rng, t, 6);
        let mask = vec![true; t];
        assert!(close(&logits(&sum, &x, &mask), &logits(&conv, &x, &mask), 1e-6));
    }
}

#[test]
fn axel_channel_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_seq(&mut rng, 4, 3);
    for (ablation, n) in [
        (None, 3),
        (Some(Ablation::AttAvgFc), 2),
        (Some(Ablation::AttMaxFc), 2),
        (Some(Ablation::VarFc), 4),
        (Some(Ablation::TanhAct), 3),
    ] {
        let variant = ablation.map_or(Variant::Axel, Variant::AxelAblation);
        let head = Head::build(&small(variant, 3), 1).unwrap();
        let ch = axel_channels_of(&head, &x, &[true; 4]).unwrap();
        assert_eq!(ch.len(), n, "{variant}");
        assert_eq!(axel_channels(ablation), n);
        if ablation == Some(Ablation::TanhAct) {
            assert!(ch[1..].iter().flatten().all(|v| v.abs() < 1.0));
            assert!(ch[1..].iter().flatten().any(|&v| v < 0.0));
        } else {
            assert!(ch[1..].iter().flatten().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for variant in Variant::all() {
        let head = Head::build(&small(variant, 5), 7).unwrap();
        let batch = vec![(random_seq(&mut rng, 4, 5), vec![true; 4]), (random_seq(&mut rng, 4, 5), vec![true, true, false, false])];
        for e in check_gradients(&head, &batch, &[1, 0], 1e-4).unwrap() {
            assert!(e.f64_vs_numeric < 1e-6, "{variant} {}: {}", e.name, e.f64_vs_numeric);
            assert!(e.f32_vs_numeric < 1e-4, "{variant} {}: {}", e.name, e.f32_vs_numeric);
        }
    }
}

#[test]
fn dropout_only_in_training() {
    let head = Head::build(&small(Variant::MaxPool, 4).with_dropout(0.5), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = vec![(random_seq(&mut rng, 3, 4), vec![true; 3])];
    let eval = head.loss(&batch, &[1]).unwrap();
    let (eval2, _) = head.loss_and_gradients(&batch, &[1], &mut Mode::Eval).unwrap();
    assert_eq!(eval, eval2);
    let losses: Vec<f64> = (0..8)
        .map(|_| head.loss_and_gradients(&batch, &[1], &mut Mode::Train(&mut rng)).unwrap().0)
        .collect();
    assert!(losses.iter().any(|&l| (l - eval).abs() > 1e-9));
}

fn permutation_changes(variant: Variant, seed: u64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = Head::build(&small(variant, 4), seed).unwrap();
    let x = random_seq(&mut rng, 5, 4);
    let rows: Vec<Vec<f32>> = (0..5).map(|t| x.row(t).to_vec()).collect();
    let permuted = Tensor::from_rows(&[rows[3].clone(), rows[0].clone(), rows[4].clone(), rows[1].clone(), rows[2].clone()]).unwrap();
    let a = logits(&head, &x, &[true; 5]);
    let b = logits(&head, &permuted, &[true; 5]);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn order_sensitive_heads_see_permutations() {
    for variant in [Variant::LstmHead { layers: 1 }, Variant::LstmHead { layers: 2 }, Variant::Cbam, Variant::Csar, Variant::Ram] {
        assert!(permutation_changes(variant, 17) > 1e-5, "{variant}");
    }
}

fn order_free(variant: Variant) -> bool {
    !matches!(variant, Variant::LstmHead { .. } | Variant::Cbam | Variant::Csar | Variant::Ram | Variant::DenseFirstToken)
}

proptest! {
    #[test]
    fn pooling_heads_ignore_position_order(seed in 0u64..1000) {
        for variant in Variant::all().into_iter().filter(|v| order_free(*v)) {
            prop_assert!(permutation_changes(variant, seed) < 1e-5, "{}", variant);
        }
    }

    #[test]
    fn trailing_padding_never_changes_logits(seed in 0u64..1000, t in 1usize..6, pad in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for variant in Variant::all() {
            let head = Head::build(&small(variant, 3), seed).unwrap();
            let x = random_seq(&mut rng, t, 3);
            let noise = random_seq(&mut rng, pad, 3);
            let mut rows: Vec<Vec<f32>> = (0..t).map(|r| x.row(r).to_vec()).collect();
            rows.extend((0..pad).map(|r| noise.row(r).iter().map(|v| v * 50.0).collect::<Vec<_>>()));
            let padded = Tensor::from_rows(&rows).unwrap();
            let mut mask = vec![true; t];
            mask.extend(vec![false; pad]);
            let a = logits(&head, &x, &vec![true; t]);
            let b = logits(&head, &padded, &mask);
            prop_assert!(close(&a, &b, 1e-5), "{} {:?} {:?}", variant, a, b);
        }
    }
}
