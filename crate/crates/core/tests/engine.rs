use dpsur::accountant::PrivacyLedger;
use dpsur::engine::{
    dpsgd_train, dpsur_train, Algorithm, Checkpoint, EventKind, TraceEvent, TrainConfig, Trainer,
};
use dpsur::error::Error;
use dpsur::models::{loss, per_sample_gradients, Example, ModelParams, ModelShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn regression_data(n: usize, seed: u64) -> Vec<Example<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = 0.5 * x[0] - 1.5 * x[1] + 0.25 * x[2] + 0.3 + 0.1 * rng.random_range(-1.0..1.0);
            Example::regression(x, y)
        })
        .collect()
}

fn blob_data(n: usize, seed: u64) -> Vec<Example<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = i % 3;
            let x = vec![
                [2.0, -2.0, 0.0][c] + rng.random_range(-1.0..1.0),
                [0.0, 0.0, 2.5][c] + rng.random_range(-1.0..1.0),
            ];
            Example::classified(x, c)
        })
        .collect()
}

fn base_config() -> TrainConfig {
    TrainConfig {
        eta: 0.2,
        batch_train: 50,
        batch_valid: 50,
        sigma_train: 1.0,
        sigma_valid: 1.0,
        target_epsilon: None,
        max_updates: 200,
        max_iterations: 400,
        seed: 7,
        ..TrainConfig::default()
    }
}

fn strip_time(events: &[TraceEvent]) -> Vec<TraceEvent> {
    events
        .iter()
        .cloned()
        .map(|mut e| {
            e.elapsed_secs = 0.0;
            e
        })
        .collect()
}

#[test]
fn epsilon_is_charged_only_for_accepted_updates() {
    let data = regression_data(500, 1);
    let config = base_config();
    let mut trainer = Trainer::new(&data, None, ModelShape::linear(3), config.clone()).unwrap();
    let reference: PrivacyLedger = config.ledger(data.len()).unwrap().unwrap();
    let mut previous = trainer.epsilon();
    let mut rejected = 0;
    while !trainer.is_finished() {
        let e = trainer.step().unwrap();
        let offline = reference.with_updates(e.t).epsilon().unwrap();
        assert_eq!(e.epsilon, offline, "iteration {}", e.iteration);
        match e.event {
            EventKind::Accepted => assert!(e.epsilon > previous),
            _ => {
                rejected += 1;
                assert_eq!(e.epsilon, previous);
            }
        }
        previous = e.epsilon;
    }
    assert!(rejected > 0, "test needs some rejections");
}

#[test]
fn rejection_leaves_parameters_untouched() {
    let data = blob_data(300, 2);
    let mut trainer = Trainer::new(&data, None, ModelShape::logistic(2, 3), base_config()).unwrap();
    let mut seen = 0;
    for _ in 0..200 {
        let before = trainer.params().clone();
        let e = trainer.step().unwrap();
        if e.event != EventKind::Accepted {
            assert_eq!(trainer.params(), &before);
            seen += 1;
        } else {
            assert_ne!(trainer.params(), &before);
        }
    }
    assert!(seen > 0);
}

#[test]
fn huge_validation_noise_accepts_about_half() {
    let data = regression_data(400, 3);
    let config = TrainConfig {
        sigma_valid: 1e6,
        beta: 0.0,
        max_updates: 100_000,
        max_iterations: 4000,
        ..base_config()
    };
    let (_, trace) = dpsur_train(&data, None, ModelShape::linear(3), config).unwrap();
    let c = trace.counts();
    let rate = c.accepted as f64 / (c.accepted + c.rejected) as f64;
    assert!((rate - 0.5).abs() < 0.03, "acceptance rate {rate}");
}

#[test]
fn noiseless_test_accepts_exactly_the_improvements() {
    let data = regression_data(200, 4);
    let config = TrainConfig {
        sigma_train: 0.5,
        sigma_valid: 0.0,
        beta: 0.0,
        batch_valid: data.len(),
        eta: 0.8,
        max_iterations: 300,
        ..base_config()
    };
    let mut trainer = Trainer::new(&data, None, ModelShape::linear(3), config).unwrap();
    let (mut acc, mut rej) = (0, 0);
    while !trainer.is_finished() {
        let before = trainer.params().clone();
        let e = trainer.step().unwrap();
        if e.event == EventKind::Skipped {
            continue;
        }
        let old = loss(&before, &data).unwrap();
        let new = e.loss.unwrap();
        match e.event {
            EventKind::Accepted => {
                acc += 1;
                assert!(new < old)
            }
            _ => {
                rej += 1;
                assert!(new >= old)
            }
        }
    }
    assert!(acc > 0 && rej > 0, "accepted {acc}, rejected {rej}");
}

#[test]
fn noiseless_full_batch_dpsgd_is_gradient_descent() {
    let data = regression_data(60, 5);
    let shape = ModelShape::linear(3);
    let config = TrainConfig {
        algorithm: Algorithm::Dpsgd,
        sigma_train: 0.0,
        clip_train: 1e9,
        momentum: 0.0,
        batch_train: data.len(),
        eta: 0.1,
        max_updates: 25,
        ..base_config()
    };
    let (trained, trace) = dpsgd_train(&data, None, shape, config.clone()).unwrap();
    assert_eq!(trace.counts().accepted, 25);
    assert!(trace.events.iter().all(|e| e.epsilon.is_infinite()));

    let init = Trainer::new(&data, None, shape, config).unwrap().params().clone();
    let mut w = init.weights().to_vec();
    for _ in 0..25 {
        let p = ModelParams::with_weights(shape, w.clone()).unwrap();
        let grads = per_sample_gradients(&p, &data).unwrap();
        for (j, wj) in w.iter_mut().enumerate() {
            let g: f64 = grads.per_sample().iter().map(|g| g[j]).sum::<f64>() / data.len() as f64;
            *wj -= 0.1 * g;
        }
    }
    for (a, b) in trained.weights().iter().zip(&w) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    let data = blob_data(300, 6);
    let shape = ModelShape::mlp1(2, 4, 3);
    let (p1, t1) = dpsur_train(&data, None, shape, base_config()).unwrap();
    let (p2, t2) = dpsur_train(&data, None, shape, base_config()).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(strip_time(&t1.events), strip_time(&t2.events));
    let other = TrainConfig { seed: 8, ..base_config() };
    let (p3, _) = dpsur_train(&data, None, shape, other).unwrap();
    assert_ne!(p1, p3);
}

#[test]
fn always_accepting_threshold_reproduces_dpsgd() {
    let data = regression_data(300, 7);
    let shape = ModelShape::linear(3);
    let config = TrainConfig {
        beta: 1e12,
        max_updates: 80,
        ..base_config()
    };
    let (a, ta) = dpsur_train(&data, None, shape, config.clone()).unwrap();
    let (b, tb) = dpsgd_train(&data, None, shape, config).unwrap();
    assert_eq!(ta.counts().rejected, 0);
    assert_eq!(a, b);
    assert_eq!(ta.counts().accepted, tb.counts().accepted);
}

#[test]
fn budget_caps_accepted_updates() {
    let data = regression_data(1000, 8);
    let config = TrainConfig {
        target_epsilon: Some(1.0),
        batch_train: 100,
        batch_valid: 5,
        sigma_train: 1.5,
        sigma_valid: 2.0,
        max_updates: 1_000_000,
        max_iterations: 1_000_000,
        ..base_config()
    };
    let config_copy = config.clone();
    let (_, trace) = dpsur_train(&data, None, ModelShape::linear(3), config).unwrap();
    let last = trace.events.last().unwrap();
    assert!(last.t > 0);
    assert!(last.epsilon <= 1.0);
    let ledger = config_copy.ledger(1000)
        .unwrap()
        .unwrap();
    assert!(ledger.with_updates(last.t + 1).epsilon().unwrap() > 1.0);
}

#[test]
fn unreachable_budget_is_reported() {
    let data = regression_data(100, 9);
    let config = TrainConfig {
        target_epsilon: Some(0.01),
        ..base_config()
    };
    let err = Trainer::new(&data, None, ModelShape::linear(3), config).err().unwrap();
    assert!(matches!(err, Error::InfeasibleBudget(_)), "{err}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = blob_data(240, 10);
    let shape = ModelShape::mlp1(2, 5, 3);
    let mut full = Trainer::new(&data, None, shape, base_config()).unwrap();
    let full_trace = full.run_collect().unwrap();

    let mut first = Trainer::new(&data, None, shape, base_config()).unwrap();
    let mut events = Vec::new();
    for _ in 0..137 {
        events.push(first.step().unwrap());
    }
    let bytes = first.checkpoint().to_bytes().unwrap();
    drop(first);
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    let mut second = Trainer::resume(&data, None, ckpt).unwrap();
    events.extend(second.run_collect().unwrap().events);

    assert_eq!(second.params(), full.params());
    assert_eq!(strip_time(&events), strip_time(&full_trace.events));
}

#[test]
fn f32_checkpoint_round_trips_and_rejects_wrong_type() {
    let data: Vec<Example<f32>> = regression_data(100, 11)
        .into_iter()
        .map(|e| match e.label {
            dpsur::models::Label::Value(y) => {
                Example::regression(e.features.iter().map(|&v| v as f32).collect(), y as f32)
            }
            _ => unreachable!(),
        })
        .collect();
    let mut t = Trainer::new(&data, None, ModelShape::linear(3), base_config()).unwrap();
    for _ in 0..20 {
        t.step().unwrap();
    }
    let ckpt = Checkpoint::from_bytes(&t.checkpoint().to_bytes().unwrap()).unwrap();
    assert_eq!(&ckpt.params::<f32>().unwrap(), t.params());
    assert!(ckpt.params::<f64>().is_err());
    let mut bad = t.checkpoint().to_bytes().unwrap();
    bad[0] = b'X';
    assert!(Checkpoint::from_bytes(&bad).is_err());
}

#[test]
fn invalid_config_lists_every_problem() {
    let data = regression_data(10, 12);
    let config = TrainConfig {
        eta: -1.0,
        batch_train: 0,
        ..base_config()
    };
    match Trainer::new(&data, None, ModelShape::linear(3), config).err().unwrap() {
        Error::Config(problems) => assert_eq!(problems.len(), 3, "{problems:?}"),
        other => panic!("{other}"),
    }
}

#[test]
fn evaluate_counts_argmax_matches() {
    use dpsur::engine::{evaluate, Metric};
    // Logistic weights: identity on two features, zero bias (row-major, bias last).
    let shape = ModelShape::logistic(2, 2);
    let params = ModelParams::with_weights(shape, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let xs = [
        ([2.0, 1.0], 0),
        ([0.5, 0.1], 0),
        ([1.0, 3.0], 1),
        ([-1.0, 0.0], 1),
        ([0.0, -2.0], 0),
        ([3.0, 2.9], 0),
        ([0.2, 0.3], 1),
        ([-4.0, -1.0], 0),
        ([5.0, 6.0], 1),
        ([1.0, 0.0], 1),
    ];
    let set: Vec<_> = xs.iter().map(|(x, c)| Example::classified(x.to_vec(), *c)).collect();
    // Argmax of (x0, x1), ties to class 0: misses the 8th and 10th rows.
    assert_eq!(evaluate(&params, &set).unwrap(), Metric::Accuracy(0.8));

    let constant = ModelParams::<f64>::zeros(ModelShape::logistic(2, 4)).unwrap();
    let balanced: Vec<_> = (0..400).map(|i| Example::classified(vec![1.0, 1.0], i % 4)).collect();
    assert_eq!(evaluate(&constant, &balanced).unwrap(), Metric::Accuracy(0.25));

    let linear = ModelParams::with_weights(ModelShape::linear(1), vec![2.0, 0.0]).unwrap();
    let reg = vec![Example::regression(vec![1.0], 2.0), Example::regression(vec![1.0], 4.0)];
    assert_eq!(evaluate(&linear, &reg).unwrap(), Metric::MeanLoss(1.0));
    assert!(evaluate(&linear, &[]).is_err());
}
