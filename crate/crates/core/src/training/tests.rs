use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::embeddings::EmbeddingTable;
use crate::models::{Architecture, ModelConfig, Scorer};
use crate::numeric::Tensor;

fn random_table(rng: &mut ChaCha8Rng, tokens: Vec<String>, dim: usize) -> EmbeddingTable {
    let n = tokens.len();
    let data = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    EmbeddingTable::new(tokens, Tensor::new(vec![n, dim], data).unwrap()).unwrap()
}

fn small_config(arch: Architecture) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch, 8);
    cfg.n_q = 4;
    cfg.n_d = 8;
    cfg.repr_dim = 6;
    cfg.hidden = 5;
    cfg.channels = 4;
    cfg
}

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Relevant documents contain the query's single token, irrelevant ones
/// only noise.
fn separable(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let noise = words("n", 30);
    let pick = |rng: &mut ChaCha8Rng, k: usize| -> Vec<String> {
        (0..k)
            .map(|_| noise[rng.gen_range(0..30)].clone())
            .collect()
    };
    let examples = (0..n)
        .map(|_| {
            let q = format!("q{}", rng.gen_range(0..10));
            let mut rel = pick(rng, 5);
            rel.insert(rng.gen_range(0..=5), q.clone());
            Example {
                query: vec![q],
                rel,
                irrel: pick(rng, 6),
            }
        })
        .collect();
    Dataset::new(examples)
}

fn toy_model(seed: u64) -> (NeuralModel, Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = words("q", 10);
    tokens.extend(words("n", 30));
    let table = random_table(&mut rng, tokens, 8);
    let model = NeuralModel::new(small_config(Architecture::KernelPooling), &table, seed).unwrap();
    let train = separable(&mut rng, 200);
    let val = separable(&mut rng, 50);
    (model, train, val)
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        batch_size: 16,
        min_learning_rate: 1e-6,
        ..TrainConfig::default()
    }
}

#[test]
fn margin_loss_examples() {
    assert_eq!(margin_loss(2.0, 0.0), 0.0);
    assert_eq!(margin_loss(0.0, 0.0), 1.0);
    assert!((margin_loss(0.3, 0.5) - 1.2).abs() < 1e-15);
    assert_eq!(margin_loss(1.0, 0.0), 0.0);
    assert!(margin_loss(f64::NAN, 0.0).is_nan());
}

proptest! {
    #[test]
    fn margin_loss_is_nonnegative_hinge(r in -1e3f64..1e3, i in -1e3f64..1e3) {
        let l = margin_loss(r, i);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, r >= i + 1.0);
        prop_assert_eq!(l, (i - r + 1.0).max(0.0));
    }
}

struct Fixed(f64);

impl Scorer for Fixed {
    fn score(&self, _: &[String], _: &[String]) -> crate::Result<f64> {
        Ok(self.0)
    }
}

/// Scores documents by whether they contain the first query token.
struct Perfect;

impl Scorer for Perfect {
    fn score(&self, q: &[String], d: &[String]) -> crate::Result<f64> {
        Ok(if d.contains(&q[0]) { 2.0 } else { 0.0 })
    }
}

#[test]
fn error_rate_conventions() {
    let data = separable(&mut ChaCha8Rng::seed_from_u64(3), 40);
    let perfect = pairwise_error_rate(&Perfect, &data).unwrap();
    assert_eq!((perfect.errors, perfect.rate), (0, 0.0));
    let constant = pairwise_error_rate(&Fixed(0.5), &data).unwrap();
    assert_eq!(
        (constant.errors, constant.total, constant.rate),
        (40, 40, 1.0)
    );
    assert!(pairwise_error_rate(&Perfect, &Dataset::default()).is_err());

    let half = ErrorRateReport::new(10, 40)
        .unwrap()
        .against(&constant)
        .unwrap();
    assert_eq!(half.relative_percent, Some(25.0));
    assert_eq!(half.baseline_rate, Some(1.0));
    assert!(half.to_string().ends_with("relative=25.00%"));
    assert!(constant.clone().against(&perfect).is_err());
    assert!(ErrorRateReport::new(1, 0).is_err());
}

#[test]
fn comparison_table_layout() {
    let base = ErrorRateReport::new(40, 100).unwrap();
    let row = |name: &str, v: usize, t: usize| VariantResult {
        variant: name.into(),
        validation: ErrorRateReport::new(v, 100)
            .unwrap()
            .against(&base)
            .unwrap(),
        test: ErrorRateReport::new(t, 100)
            .unwrap()
            .against(&base)
            .unwrap(),
    };
    let text = format_comparison(&row("tf-idf", 40, 40), &[row("kernel pooling", 20, 25)]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("Model"));
    assert!(lines[1].starts_with("tf-idf") && lines[1].ends_with("100.00      100.00"));
    assert!(lines[2].ends_with("50.00       62.50"));
}

#[test]
fn one_small_step_decreases_the_loss() {
    let archs = [
        Architecture::KernelPooling,
        Architecture::Siamese,
        Architecture::DssmLike,
        Architecture::HybridLocal,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 100 {
        let arch = archs[checked % 4];
        let table = random_table(&mut rng, words("t", 12), 8);
        let mut model = NeuralModel::new(small_config(arch), &table, rng.gen()).unwrap();
        // non-zero biases so no architecture starts at a symmetric point
        for name in ["kp.b", "mlp.b", "mlp1.b", "mlp2.b", "mlp3.b"] {
            if let Some(id) = model.params().id(name) {
                for v in model.params_mut().get_mut(id).data_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
        }
        let doc = |rng: &mut ChaCha8Rng, lo, hi| -> Vec<String> {
            (0..rng.gen_range(lo..=hi))
                .map(|_| format!("t{}", rng.gen_range(0..12)))
                .collect()
        };
        let data = Dataset::new(vec![Example {
            query: doc(&mut rng, 1, 4),
            rel: doc(&mut rng, 1, 8),
            irrel: doc(&mut rng, 1, 8),
        }]);
        let enc = encode(&model, &data);
        let batch: Vec<&Encoded> = enc.iter().collect();
        let (before, grads) = batch_gradient(&model, &batch).unwrap();
        if before == 0.0 {
            continue;
        }
        let mut adam = Adam::new(model.params());
        adam.step(model.params_mut(), &grads, 1e-6);
        let (after, _) = batch_gradient(&model, &batch).unwrap();
        assert!(after < before, "{arch}: loss {before} → {after}");
        checked += 1;
    }
}

#[test]
fn separable_toy_reaches_zero_training_error() {
    let (model, train_set, val) = toy_model(5);
    let trained = train(&model, &train_set, &val, &toy_config()).unwrap();
    assert!(trained.epochs.len() <= 21);
    let report = pairwise_error_rate(&trained.model, &train_set).unwrap();
    assert_eq!(report.rate, 0.0, "{:?}", trained.epochs);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (model, train_set, val) = toy_model(6);
    let cfg = TrainConfig {
        max_epochs: 3,
        ..toy_config()
    };
    let a = train(&model, &train_set, &val, &cfg).unwrap();
    let b = train(&model, &train_set, &val, &cfg).unwrap();
    assert_eq!(a.epochs, b.epochs);
    for ((_, _, x), (_, _, y)) in a.model.params().iter().zip(b.model.params().iter()) {
        let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
}

#[cfg(feature = "parallel")]
#[test]
fn gradients_do_not_depend_on_thread_count() {
    let (model, train_set, _) = toy_model(7);
    let enc = encode(&model, &train_set);
    let batch: Vec<&Encoded> = enc.iter().collect();
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let (l1, g1) = pool(1).install(|| batch_gradient(&model, &batch)).unwrap();
    let (l4, g4) = pool(4).install(|| batch_gradient(&model, &batch)).unwrap();
    assert_eq!(l1.to_bits(), l4.to_bits());
    assert_eq!(g1, g4);
}

#[test]
fn frozen_embeddings_stay_put() {
    let (model, train_set, val) = toy_model(8);
    let cfg = TrainConfig {
        frozen_embeddings: true,
        max_epochs: 4,
        ..toy_config()
    };
    let trained = train(&model, &train_set, &val, &cfg).unwrap();
    assert_eq!(
        trained.model.embedding_table().vectors(),
        model.embedding_table().vectors()
    );
    let kp = model.params().id("kp.w").unwrap();
    assert_ne!(trained.model.params().get(kp), model.params().get(kp));

    let free = train(
        &model,
        &train_set,
        &val,
        &TrainConfig {
            max_epochs: 4,
            ..toy_config()
        },
    )
    .unwrap();
    assert_ne!(
        free.model.embedding_table().vectors(),
        model.embedding_table().vectors()
    );
}

#[test]
fn returns_best_validation_epoch() {
    let (model, train_set, val) = toy_model(9);
    let cfg = TrainConfig {
        max_epochs: 6,
        ..toy_config()
    };
    let trained = train(&model, &train_set, &val, &cfg).unwrap();
    let best = trained
        .epochs
        .iter()
        .map(|e| e.validation_error)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(trained.epochs[trained.best_epoch].validation_error, best);
    assert!(best <= trained.epochs[0].validation_error);
    let enc = encode(&trained.model, &val);
    assert_eq!(evaluate(&trained.model, &enc).unwrap().1, best);
    let line = trained.epochs[1].to_string();
    assert!(line.starts_with("epoch=1 train_loss="));
    assert!(line.contains(" validation_error=") && line.contains(" lr="));
}

#[test]
fn invalid_inputs_are_rejected() {
    let (model, train_set, val) = toy_model(10);
    assert!(matches!(
        train(&model, &Dataset::default(), &val, &toy_config()),
        Err(crate::Error::Empty(_))
    ));
    assert!(train(&model, &train_set, &Dataset::default(), &toy_config()).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..toy_config()
    };
    assert!(train(&model, &train_set, &val, &bad).is_err());
    let bad = TrainConfig {
        learning_rate: 0.0,
        ..toy_config()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let (mut model, train_set, val) = toy_model(11);
    let id = model.params().id("kp.b").unwrap();
    model.params_mut().get_mut(id).data_mut()[0] = f64::NAN;
    let cfg = TrainConfig {
        max_epochs: 2,
        ..toy_config()
    };
    match train(&model, &train_set, &val, &cfg) {
        Err(crate::Error::NonFiniteLoss { epoch, batch, lr }) => {
            assert_eq!((epoch, batch), (1, 0));
            assert_eq!(lr, 0.05);
        }
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}
