use proptest::prelude::*;

use super::*;
use crate::blocks::{BlockConfig, Head, Variant};
use crate::synthetic::gaussian_sequences;

fn approx(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn presets_match_the_published_table() {
    // (letter, learning rate, batch size, RNN feature size, RNN dropout)
    let table: [(&str, f64, usize, Option<usize>, Option<f64>); 12] = [
        ("A", 0.001, 32, Some(128), Some(0.0)),
        ("B", 0.001, 32, Some(128), Some(0.2)),
        ("C", 0.0005, 16, Some(128), Some(0.2)),
        ("D", 0.00005, 64, Some(128), Some(0.0)),
        ("E", 0.00005, 64, None, None),
        ("F", 0.0005, 64, None, None),
        ("G", 0.00001, 64, None, None),
        ("H", 0.0005, 32, Some(64), Some(0.2)),
        ("I", 0.0005, 32, Some(128), Some(0.2)),
        ("J", 0.0005, 64, Some(128), Some(0.2)),
        ("K", 0.00005, 32, None, None),
        ("L", 0.00005, 32, Some(128), Some(0.0)),
    ];
    for (letter, lr, batch, hidden, dropout) in table {
        let p = letter.parse::<PresetId>().unwrap().preset();
        assert_eq!(p.id.to_string(), letter);
        assert_eq!((p.learning_rate, p.batch_size, p.rnn_hidden, p.rnn_dropout), (lr, batch, hidden, dropout));
    }
    assert_eq!("f".parse::<PresetId>().unwrap(), PresetId::F);
    assert!("M".parse::<PresetId>().is_err());
    let f = TrainConfig::from_preset(PresetId::F);
    assert_eq!((f.learning_rate, f.batch_size, f.max_len, f.patience, f.max_epochs), (0.0005, 64, 64, 5, 100));
}

#[test]
fn train_spec_resolution() {
    let lstm = BlockConfig::new(Variant::LstmHead { layers: 2 }, 8).with_hidden(7);
    let (cfg, block) = TrainSpec::preset(PresetId::H).resolve(&lstm, 3).unwrap();
    assert_eq!((cfg.learning_rate, cfg.batch_size, cfg.seed), (0.0005, 32, 3));
    assert_eq!(cfg.preset.as_deref(), Some("H"));
    assert_eq!((block.hidden, block.dropout), (64, 0.2));

    let axel = BlockConfig::new(Variant::Axel, 8);
    let (_, block) = TrainSpec::preset(PresetId::B).resolve(&axel, 0).unwrap();
    assert_eq!(block, axel);

    let m = TrainSpec {
        preset: Some("M".into()),
        ..TrainSpec::default()
    };
    let err = m.resolve(&axel, 0).unwrap_err().to_string();
    assert!(err.contains("\"M\"") && err.contains("learning_rate"), "{err}");
    let m = TrainSpec {
        learning_rate: Some(0.002),
        batch_size: Some(8),
        patience: Some(0),
        ..m
    };
    let (cfg, _) = m.resolve(&axel, 0).unwrap();
    assert_eq!((cfg.learning_rate, cfg.batch_size, cfg.patience), (0.002, 8, 0));
    assert_eq!(cfg.preset.as_deref(), Some("M"));

    let over = TrainSpec {
        learning_rate: Some(0.1),
        rnn_dropout: Some(0.5),
        ..TrainSpec::preset(PresetId::F)
    };
    let (cfg, block) = over.resolve(&axel, 0).unwrap();
    assert_eq!((cfg.learning_rate, cfg.batch_size, block.dropout), (0.1, 64, 0.5));
    assert!(TrainSpec::default().resolve(&axel, 0).is_err());
}

#[test]
fn experiment_spec_json() {
    let text = r#"{"protocol":{"kind":"few_shot","pct":10},"block":{"variant":"axel","dim":4},"train":{"preset":"F"},"seed":7}"#;
    let spec: ExperimentSpec = serde_json::from_str(text).unwrap();
    assert_eq!(spec.protocol, Protocol::FewShot { pct: 10 });
    assert_eq!(serde_json::from_str::<ExperimentSpec>(&serde_json::to_string(&spec).unwrap()).unwrap(), spec);
    let zero: Protocol = serde_json::from_str(r#"{"kind":"zero_shot"}"#).unwrap();
    assert_eq!(zero.canonical(), Protocol::FewShot { pct: 0 });
    assert!(serde_json::from_str::<ExperimentSpec>(&text.replace("\"seed\"", "\"sed\"")).is_err());
    assert!(serde_json::from_str::<Protocol>(r#"{"kind":"few_shot","pct":10,"x":1}"#).is_err());
    assert!(serde_json::from_str::<TrainSpec>(r#"{"preset":"F","lr":1}"#).is_err());
}

#[test]
fn hand_confusion_matrix() {
    let c = Confusion {
        tp: 3,
        fp: 1,
        fn_: 2,
        tn: 4,
    };
    let r = MetricsReport::from_confusion(c).unwrap();
    assert!(approx(r.precision, 75.0, 1e-9));
    assert!(approx(r.recall, 60.0, 1e-9));
    assert!(approx(r.f1, 200.0 / 3.0, 1e-9));
    assert!(approx(r.accuracy, 70.0, 1e-9));
    // Class 0: precision 4/6, recall 4/5.
    assert!(approx(r.f1_per_class[0], 800.0 / 11.0, 1e-9));
    assert!(approx(r.macro_f1, (200.0 / 3.0 + 800.0 / 11.0) / 2.0, 1e-9));

    let gold = [1, 1, 1, 0, 0, 0, 0, 1, 1, 0];
    let pred = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
    assert_eq!(Confusion::from_predictions(&pred, &gold).unwrap(), Confusion { tp: 3, fp: 1, fn_: 2, tn: 4 });
}

#[test]
fn perfect_and_all_positive_predictors() {
    let gold = [0, 1, 1, 0, 1];
    let r = MetricsReport::from_predictions(&gold, &gold).unwrap();
    assert_eq!((r.accuracy, r.precision, r.recall, r.f1, r.macro_f1), (100.0, 100.0, 100.0, 100.0, 100.0));

    let gold: Vec<u8> = (0..100).map(|i| u8::from(i < 42)).collect();
    let r = MetricsReport::from_predictions(&[1; 100], &gold).unwrap();
    assert_eq!((r.recall, r.precision, r.accuracy), (100.0, 42.0, 42.0));
    assert!(approx(r.f1, 2.0 * 42.0 / 142.0 * 100.0, 1e-9));
    assert_eq!(r.f1_per_class[0], 0.0);

    assert!(MetricsReport::from_predictions(&[], &[]).is_err());
    assert!(MetricsReport::from_predictions(&[1], &[1, 0]).is_err());
}

proptest! {
    #[test]
    fn metric_identities(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)) {
        let (pred, gold): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let r = MetricsReport::from_predictions(&pred, &gold).unwrap();
        let count = |p: u8, g: u8| pred.iter().zip(&gold).filter(|&(&a, &b)| a == p && b == g).count() as f64;
        let (tp, fp, fnn, tn) = (count(1, 1), count(1, 0), count(0, 1), count(0, 0));
        let n = pred.len() as f64;
        prop_assert!(approx(r.accuracy, 100.0 * (tp + tn) / n, 1e-9));
        if tp + fp > 0.0 {
            prop_assert!(approx(r.precision, 100.0 * tp / (tp + fp), 1e-9));
        }
        if tp + fnn > 0.0 {
            prop_assert!(approx(r.recall, 100.0 * tp / (tp + fnn), 1e-9));
        }
        if r.precision + r.recall > 0.0 {
            prop_assert!(approx(r.f1, 2.0 * r.precision * r.recall / (r.precision + r.recall), 1e-9));
        }
        let lo = r.f1_per_class[0].min(r.f1_per_class[1]);
        let hi = r.f1_per_class[0].max(r.f1_per_class[1]);
        prop_assert!(lo - 1e-12 <= r.macro_f1 && r.macro_f1 <= hi + 1e-12);
    }

    #[test]
    fn injected_count_is_monotone_and_nested(n in 0usize..400, seed in 0u64..50) {
        let target = gaussian_sequences(n, 2, 1, 1.0, seed, "t");
        let mut previous: Vec<Example> = Vec::new();
        for pct in 0..=100u32 {
            let sample = few_shot_sample(&target, pct, seed).unwrap();
            prop_assert_eq!(sample.len(), pct as usize * n / 100);
            prop_assert!(sample.len() >= previous.len());
            prop_assert_eq!(&sample[..previous.len()], &previous[..]);
            previous = sample;
        }
    }
}

#[test]
fn few_shot_mix_accounting() {
    let source = gaussian_sequences(50, 3, 2, 1.0, 1, "s");
    let target = gaussian_sequences(3000, 1, 1, 1.0, 2, "t");
    assert_eq!(few_shot_mix(&source, &target, 0, 9).unwrap(), source);
    assert_eq!(few_shot_mix(&source, &target, 100, 9).unwrap().len(), 3050);
    let a = few_shot_sample(&target, 1, 9).unwrap();
    assert_eq!(a.len(), 30);
    assert_eq!(a, few_shot_sample(&target, 1, 9).unwrap());
    assert_ne!(a, few_shot_sample(&target, 1, 10).unwrap());
    let mut reversed = target.clone();
    reversed.reverse();
    assert_eq!(a, few_shot_sample(&reversed, 1, 9).unwrap());
    for (pct, n) in [(5, 150), (10, 300), (25, 750), (50, 1500)] {
        assert_eq!(injected_count(3000, pct), n);
    }
    assert!(few_shot_sample(&target, 101, 0).is_err());
}

#[test]
fn batches_pad_to_longest_and_cap_length() {
    let mut examples = gaussian_sequences(3, 2, 5, 1.0, 0, "x");
    examples[1] = gaussian_sequences(1, 2, 2, 1.0, 1, "y").remove(0);
    examples[2] = gaussian_sequences(1, 2, 90, 1.0, 2, "z").remove(0);
    let refs: Vec<&Example> = examples.iter().collect();
    let (inputs, labels) = pad_batch(&refs[..2], 64);
    assert_eq!(labels, [0, 0]);
    assert_eq!(inputs[1].0.shape(), &[5, 2]);
    assert_eq!(inputs[1].1, [true, true, false, false, false]);
    assert_eq!(&inputs[1].0.data()[4..], &[0.0; 6]);
    assert_eq!(&inputs[0].0.data()[..], examples[0].features.matrix.data());
    let (inputs, _) = pad_batch(&refs, 64);
    assert!(inputs.iter().all(|(x, m)| x.shape() == [64, 2] && m.len() == 64));
    assert_eq!(inputs[2].1, vec![true; 64]);
}

fn dense_head(dim: usize) -> Head {
    Head::build(&BlockConfig::new(Variant::MaxPool, dim), 0).unwrap()
}

fn accuracy(head: &Head, set: &[Example]) -> f64 {
    evaluate(head, set, 64).unwrap().accuracy
}

#[test]
fn separable_set_is_learned() {
    let data = gaussian_sequences(20, 4, 3, 6.0, 5, "s");
    let cfg = TrainConfig::new(0.01, 4).with_epochs(200, 200);
    let out = train(dense_head(4), &data, &data, &cfg).unwrap();
    assert!(accuracy(&out.head, &data) >= 99.0);
}

#[test]
fn zero_patience_runs_one_epoch() {
    let data = gaussian_sequences(12, 4, 3, 1.0, 5, "s");
    let cfg = TrainConfig::new(0.01, 4).with_epochs(50, 0);
    let out = train(dense_head(4), &data, &data, &cfg).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn training_is_deterministic_and_keeps_the_best_epoch() {
    let train_set = gaussian_sequences(40, 4, 3, 0.8, 1, "a");
    let val = gaussian_sequences(30, 4, 3, 0.8, 2, "b");
    let head = Head::build(&BlockConfig::new(Variant::Axel, 4).with_dropout(0.3), 4).unwrap();
    let cfg = TrainConfig::new(0.02, 8).with_epochs(25, 6).with_seed(11);
    let a = train(head.clone(), &train_set, &val, &cfg).unwrap();
    let b = train(head, &train_set, &val, &cfg).unwrap();
    assert_eq!(a, b);

    let best = a.history.iter().map(|r| r.val_f1).fold(f64::MIN, f64::max);
    let returned = evaluate(&a.head, &val, 64).unwrap();
    assert_eq!(returned.f1, best);
    assert_eq!(a.history[a.best_epoch - 1].val_f1, best);
    assert!(a.history.len() - a.best_epoch <= 6);
}

#[test]
fn training_input_errors() {
    let data = gaussian_sequences(4, 3, 2, 1.0, 0, "s");
    let cfg = TrainConfig::new(0.01, 2);
    assert!(matches!(train(dense_head(3), &[], &data, &cfg), Err(TrainError::Empty(_))));
    assert!(matches!(train(dense_head(3), &data, &[], &cfg), Err(TrainError::Empty(_))));
    assert!(matches!(
        train(dense_head(5), &data, &data, &cfg),
        Err(TrainError::Dim { expected: 5, got: 3 })
    ));
    assert!(train(dense_head(3), &data, &data, &TrainConfig::new(0.0, 2)).is_err());
    assert!(matches!(evaluate(&dense_head(3), &[], 64), Err(TrainError::Empty(_))));
}

fn language(seed: u64, prefix: &str, sizes: [usize; 3], shift: f32) -> Splits {
    Splits {
        train: gaussian_sequences(sizes[0], 6, 4, shift, seed, &format!("{prefix}tr")),
        validation: gaussian_sequences(sizes[1], 6, 4, shift, seed + 1, &format!("{prefix}va")),
        test: gaussian_sequences(sizes[2], 6, 4, shift, seed + 2, &format!("{prefix}te")),
    }
}

fn spec(protocol: Protocol) -> ExperimentSpec {
    ExperimentSpec {
        protocol,
        block: BlockConfig::new(Variant::Axel, 6),
        train: TrainSpec {
            max_epochs: Some(30),
            ..TrainSpec::preset(PresetId::F)
        },
        seed: 3,
    }
}

#[test]
fn zero_shot_equals_few_shot_zero() {
    let data = ExperimentData {
        source: language(10, "s", [80, 20, 20], 1.0),
        target: Some(language(20, "t", [60, 20, 30], 1.0)),
    };
    let zero = run_experiment(&spec(Protocol::ZeroShot), &data).unwrap();
    let few = run_experiment(&spec(Protocol::FewShot { pct: 0 }), &data).unwrap();
    assert_eq!(zero.without_timing(), few.without_timing());
    assert_eq!(
        serde_json::to_string(&zero.without_timing()).unwrap(),
        serde_json::to_string(&few.without_timing()).unwrap()
    );
    assert_eq!(zero.protocol, Protocol::FewShot { pct: 0 });
    assert_eq!(zero.sizes, SetSizes { train: 80, validation: 20, test: 30, injected: 0 });

    let ten = run_experiment(&spec(Protocol::FewShot { pct: 10 }), &data).unwrap();
    assert_eq!(ten.sizes.injected, 6);
    assert_eq!(ten.injected_ids.len(), 6);
    assert!(ten.injected_ids.iter().all(|id| id.starts_with("ttr")));

    let uni = run_experiment(&spec(Protocol::Unilingual), &data).unwrap();
    assert_eq!(uni.sizes.test, 20);
    let no_target = ExperimentData {
        target: None,
        ..data
    };
    assert!(matches!(
        run_experiment(&spec(Protocol::ZeroShot), &no_target),
        Err(TrainError::MissingTarget(_))
    ));
    assert!(run_experiment(&spec(Protocol::Unilingual), &no_target).is_ok());
}

#[test]
fn few_shot_only_underperforms_mixed_training() {
    let data = ExperimentData {
        source: language(30, "s", [300, 60, 20], 1.2),
        target: Some(language(40, "t", [100, 20, 200], 1.2)),
    };
    let only = run_experiment(&spec(Protocol::FewShotOnly { pct: 10 }), &data).unwrap();
    let mixed = run_experiment(&spec(Protocol::FewShot { pct: 10 }), &data).unwrap();
    assert_eq!(only.injected_ids, mixed.injected_ids);
    assert_eq!(only.sizes.train, 10);
    assert!(mixed.report.f1 > only.report.f1, "mixed {} vs only {}", mixed.report.f1, only.report.f1);
}

#[test]
fn sweep_gives_one_record_per_percentage() {
    let data = ExperimentData {
        source: language(50, "s", [40, 10, 10], 1.0),
        target: Some(language(60, "t", [200, 10, 10], 1.0)),
    };
    let mut s = spec(Protocol::Unilingual);
    s.train.max_epochs = Some(2);
    let records = few_shot_sweep(&s, &data, &FEW_SHOT_GRID).unwrap();
    assert_eq!(records.len(), FEW_SHOT_GRID.len());
    for (r, pct) in records.iter().zip(FEW_SHOT_GRID) {
        assert_eq!(r.protocol, Protocol::FewShot { pct });
        assert_eq!(r.sizes.injected, 2 * pct as usize);
    }
}

#[test]
fn tfidf_hand_case() {
    let docs = vec![vec!["a", "b"], vec!["a", "a"]];
    let tfidf = Tfidf::fit(&docs).unwrap();
    assert_eq!(tfidf.idf("a"), Some(1.0));
    assert!(approx(tfidf.idf("b").unwrap(), 1.4054651081081644, 1e-12));
    let rows = tfidf.transform_all(&docs);
    let (a, b) = (tfidf.column("a").unwrap(), tfidf.column("b").unwrap());
    assert_eq!(rows[0].len(), 2);
    for &(i, v) in &rows[0] {
        let expected = if i == a { 0.5797386715376657 } else { 0.8148024746671689 };
        assert!(i == a || i == b);
        assert!(approx(v, expected, 1e-12));
    }
    assert_eq!(rows[1], vec![(a, 1.0)]);
    assert!(tfidf.transform(&["unseen"]).is_empty());
    assert!(Tfidf::fit::<&str>(&[]).is_err());
    assert!(Tfidf::fit::<&str>(&[vec![]]).is_err());
}

proptest! {
    #[test]
    fn tfidf_rows_are_unit_and_common_terms_rank_lowest(
        docs in prop::collection::vec(prop::collection::vec("[a-e]", 1..8), 1..12)
    ) {
        let mut docs = docs;
        for d in docs.iter_mut() {
            d.push("common".to_string());
        }
        let tfidf = Tfidf::fit(&docs).unwrap();
        for row in tfidf.transform_all(&docs) {
            let norm: f64 = row.iter().map(|(_, v)| v * v).sum();
            prop_assert!(approx(norm, 1.0, 1e-12));
            prop_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
        }
        let lowest = tfidf.idf("common").unwrap();
        prop_assert_eq!(lowest, 1.0);
        for t in ["a", "b", "c", "d", "e"] {
            if let Some(v) = tfidf.idf(t) {
                prop_assert!(v >= lowest);
            }
        }
    }

    #[test]
    fn svm_objective_never_increases(
        rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 3), 0u8..2), 2..40),
        c in 0.01f64..10.0,
    ) {
        prop_assume!(rows.iter().any(|r| r.1 == 0) && rows.iter().any(|r| r.1 == 1));
        let x: Vec<SparseVec> = rows.iter().map(|(v, _)| v.iter().copied().enumerate().collect()).collect();
        let y: Vec<u8> = rows.iter().map(|r| r.1).collect();
        let cfg = SvmConfig { c, ..SvmConfig::default() };
        let model = svm_train(&x, &y, 3, &cfg).unwrap();
        prop_assert!(model.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-6));
        let last = *model.objective_history.last().unwrap();
        prop_assert!(approx(last, svm_objective(&model.weights, model.bias, &x, &y, c), 1e-9));
    }
}

fn toy_2d() -> (Vec<SparseVec>, Vec<u8>) {
    let points = [
        ([2.0, 1.0], 1),
        ([3.0, 2.5], 1),
        ([1.5, 3.0], 1),
        ([2.5, 0.5], 1),
        ([-1.0, -2.0], 0),
        ([-2.5, -0.5], 0),
        ([-0.5, -3.0], 0),
        ([-3.0, -1.5], 0),
    ];
    (points.iter().map(|(p, _)| vec![(0, p[0]), (1, p[1])]).collect(), points.iter().map(|p| p.1).collect())
}

#[test]
fn svm_separates_a_toy_set() {
    let (x, y) = toy_2d();
    let model = svm_train(&x, &y, 2, &SvmConfig::default()).unwrap();
    assert_eq!(model.predict_all(&x), y);
    assert_eq!(SvmConfig::default().c, 3.5938);
}

#[test]
fn tiny_c_falls_back_to_the_majority() {
    let (mut x, mut y) = toy_2d();
    x.push(vec![(0, 4.0), (1, 4.0)]);
    y.push(1);
    let model = svm_train(&x, &y, 2, &SvmConfig { c: 1e-6, ..SvmConfig::default() }).unwrap();
    assert!(model.weights.iter().all(|w| w.abs() < 1e-4), "{:?}", model.weights);
    assert!(model.predict_all(&x).iter().all(|&p| p == 1));
}

#[test]
fn svm_input_errors() {
    let (x, _) = toy_2d();
    assert!(matches!(svm_train(&x, &[1; 8], 2, &SvmConfig::default()), Err(TrainError::SingleClass)));
    let (x, y) = toy_2d();
    assert!(svm_train(&x, &y, 2, &SvmConfig { c: 0.0, ..SvmConfig::default() }).is_err());
    assert!(svm_train(&x, &y, 1, &SvmConfig::default()).is_err());
}

#[test]
fn baseline_end_to_end() {
    let train_docs: Vec<Vec<&str>> = vec![
        vec!["go", "home", "invaders"],
        vec!["build", "wall", "now"],
        vec!["lovely", "day", "today"],
        vec!["nice", "weather", "today"],
        vec!["invaders", "wall"],
        vec!["lovely", "weather"],
    ];
    let train_labels = [1, 1, 0, 0, 1, 0];
    let test_docs = vec![vec!["invaders", "now"], vec!["nice", "day"]];
    let (_, _, report) = run_baseline(&train_docs, &train_labels, &test_docs, &[1, 0], &SvmConfig::default()).unwrap();
    assert_eq!(report.accuracy, 100.0);
}
