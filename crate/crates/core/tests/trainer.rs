use tcc::autodiff::{DenseArray, Graph};
use tcc::data::{blobs, AugmentPolicy, Dataset};
use tcc::encoder::{EncoderWeights, PROTOTYPES};
use tcc::trainer::{
    combined_loss, has_converged, infer, train, train_step, StepMode, TrainConfig, TrainState, Trainer,
};
use tcc::Error;

fn tiny_config() -> TrainConfig {
    TrainConfig {
        clusters: 2,
        hidden: vec![8],
        feature_dim: 4,
        batch_size: Some(16),
        cluster_queue: Some(8),
        instance_queue: Some(40),
        max_epochs: 3,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn tiny_data() -> Dataset {
    blobs(64, 2, 4.0, 0.3, 1).unwrap()
}

fn fresh_state(cfg: &TrainConfig, data: &Dataset) -> TrainState {
    TrainState::new(&cfg.resolve(data.len()).unwrap(), data.dim()).unwrap()
}

#[test]
fn combined_loss_is_a_convex_combination() {
    let mut g = Graph::new();
    let l1 = g.constant(DenseArray::scalar(2.0)).unwrap();
    let l2 = g.constant(DenseArray::scalar(4.0)).unwrap();
    for (alpha, want) in [(0.0, 4.0), (1.0, 2.0), (0.5, 3.0)] {
        let c = combined_loss(&mut g, l1, l2, alpha).unwrap();
        assert_eq!(g.scalar(c), want);
    }
    assert!(combined_loss(&mut g, l1, l2, 1.5).is_err());
}

#[test]
fn step_report_identity_and_queue_growth() {
    let cfg = tiny_config();
    let data = tiny_data();
    let mut state = fresh_state(&cfg, &data);
    let policy = AugmentPolicy::vector(data.feature_std());
    let batch = data.gather(&(0..16).collect::<Vec<_>>());
    for step in 0..3 {
        let before = (state.cluster_queue.len(), state.instance_queue.len());
        let r = train_step(&mut state, &batch, &policy).unwrap();
        assert!((r.total - (r.alpha * r.l1 + (1.0 - r.alpha) * r.l2)).abs() < 1e-10);
        assert_eq!(r.histogram.iter().sum::<usize>(), 16);
        assert_eq!(state.cluster_queue.len(), (before.0 + 2).min(8));
        assert_eq!(state.instance_queue.len(), (before.1 + 16).min(40));
        assert_eq!(state.counters.step, step + 1);
    }
}

#[test]
fn identical_inputs_give_identical_parameters() {
    let cfg = tiny_config();
    let data = tiny_data();
    let policy = AugmentPolicy::vector(data.feature_std());
    let batch = data.gather(&(10..30).collect::<Vec<_>>());
    let mut a = fresh_state(&cfg, &data);
    let mut b = fresh_state(&cfg, &data);
    for _ in 0..2 {
        train_step(&mut a, &batch, &policy).unwrap();
        train_step(&mut b, &batch, &policy).unwrap();
    }
    assert_eq!(a, b);
}

#[test]
fn zero_learning_rate_still_moves_queues_and_momentum() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        momentum: 0.5,
        ..tiny_config()
    };
    let data = tiny_data();
    let mut state = fresh_state(&cfg, &data);
    for w in state.momentum.weights.values_mut() {
        w.data_mut().iter_mut().for_each(|v| *v += 1.0);
    }
    let online_before = state.encoder.params.values();
    let momentum_before = state.momentum.weights.clone();
    let batch = data.gather(&(0..16).collect::<Vec<_>>());
    train_step(&mut state, &batch, &AugmentPolicy::identity()).unwrap();
    assert_eq!(state.encoder.params.values(), online_before);
    assert_eq!((state.cluster_queue.len(), state.instance_queue.len()), (2, 16));
    for (name, w) in &state.momentum.weights {
        let old = &momentum_before[name];
        let theta = &online_before[name];
        for ((n, o), t) in w.data().iter().zip(old.data()).zip(theta.data()) {
            assert_eq!(*n, 0.5 * o + 0.5 * t);
        }
    }
}

#[test]
fn momentum_weights_only_move_by_the_average() {
    let cfg = tiny_config();
    let data = tiny_data();
    let mut state = fresh_state(&cfg, &data);
    let batch = data.gather(&(0..16).collect::<Vec<_>>());
    let before = state.momentum.weights.clone();
    train_step(&mut state, &batch, &AugmentPolicy::identity()).unwrap();
    let m = cfg.momentum;
    for (name, w) in &state.momentum.weights {
        let theta = state.encoder.params.get(name).unwrap();
        for ((n, o), t) in w.data().iter().zip(before[name].data()).zip(theta.data()) {
            assert_eq!(*n, m * o + (1.0 - m) * t);
        }
    }
}

#[test]
fn zero_epochs_returns_the_initial_state() {
    let cfg = TrainConfig {
        max_epochs: 0,
        ..tiny_config()
    };
    let data = tiny_data();
    let (state, reports) = train(&cfg, &data).unwrap();
    assert!(reports.is_empty());
    assert_eq!(state, fresh_state(&cfg, &data));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = tiny_config();
    let data = tiny_data();
    let mut straight = Trainer::new(&cfg, &data).unwrap();
    for _ in 0..7 {
        straight.next_step().unwrap();
    }

    let mut first = Trainer::new(&cfg, &data).unwrap();
    for _ in 0..3 {
        first.next_step().unwrap();
    }
    let saved = first.state().to_json().unwrap();
    let restored = TrainState::from_json(&saved).unwrap();
    assert_eq!(&restored, first.state());
    let mut second = Trainer::resume(restored, &data).unwrap();
    for _ in 0..4 {
        second.next_step().unwrap();
    }
    assert_eq!(second.state(), straight.state());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = tiny_config();
    let data = tiny_data();
    let (state, _) = train(&cfg, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ckpt");
    state.save(&path).unwrap();
    let back = TrainState::load(&path).unwrap();
    for (name, p) in state.encoder.params.iter() {
        let q = back.encoder.params.parameter(name).unwrap();
        for (a, b) in p.value.data().iter().zip(q.value.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    assert_eq!(back, state);
    std::fs::write(&path, saved_with_bad_tag(&state)).unwrap();
    assert!(matches!(TrainState::load(&path), Err(Error::Checkpoint(_))));
}

fn saved_with_bad_tag(state: &TrainState) -> String {
    state.to_json().unwrap().replace("tcc-checkpoint/1", "tcc-checkpoint/0")
}

#[test]
fn epochs_report_and_stop() {
    let cfg = tiny_config();
    let data = tiny_data();
    let (state, reports) = train(&cfg, &data).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(state.counters.epoch, 3);
    assert_eq!(state.counters.step, 12);
    for (i, r) in reports.iter().enumerate() {
        assert_eq!(r.epoch, i as u64 + 1);
        assert_eq!(r.steps, 4);
        assert_eq!(r.histogram.iter().sum::<usize>(), 64);
        assert!(r.scores.is_some());
        assert!((r.total - (0.5 * r.l1 + 0.5 * r.l2)).abs() < 1e-12);
    }
    let unlabeled = tiny_data().without_labels();
    let (_, reports) = train(&cfg, &unlabeled).unwrap();
    assert!(reports[0].scores.is_none());
    assert!(reports[0].csv_row().ends_with(",,,"));
}

#[test]
fn every_ablation_runs() {
    let data = tiny_data();
    let variants: Vec<(&str, &str)> = vec![
        ("alpha", "0"),
        ("alpha", "1"),
        ("gumbel_samples", "10"),
        ("no_cluster_queue", "true"),
        ("no_aug_elements", "true"),
        ("hard_assign_aggregate", "true"),
        ("alternating", "true"),
        ("normalize_prototypes", "true"),
        ("augment", "none"),
    ];
    for (key, value) in variants {
        let mut cfg = tiny_config();
        cfg.max_epochs = 2;
        cfg.set(key, value).unwrap();
        let (state, reports) = train(&cfg, &data).unwrap_or_else(|e| panic!("{key}={value}: {e}"));
        assert_eq!(reports.len(), 2, "{key}");
        if key == "alternating" {
            // Four instance steps and one whole-dataset cluster step per epoch.
            assert_eq!(state.counters.step, 10);
            assert_eq!(state.cluster_queue.len(), 4);
            assert_eq!(state.instance_queue.len(), 40);
        }
        if key == "gumbel_samples" {
            // The mean embedding over samples is enqueued once per datum.
            assert_eq!(state.instance_queue.len(), 40);
        }
        if key == "no_cluster_queue" {
            assert!(state.cluster_queue.is_empty());
        }
    }
}

#[test]
fn explicit_modes_touch_only_their_queue() {
    let cfg = tiny_config();
    let data = tiny_data();
    let mut state = fresh_state(&cfg, &data);
    let batch = data.gather(&(0..16).collect::<Vec<_>>());
    let r = tcc::trainer::train_step_mode(&mut state, &batch, &AugmentPolicy::identity(), StepMode::InstanceOnly).unwrap();
    assert_eq!((r.alpha, r.total), (0.0, r.l2));
    assert_eq!((state.cluster_queue.len(), state.instance_queue.len()), (0, 16));
    let r = tcc::trainer::train_step_mode(&mut state, &batch, &AugmentPolicy::identity(), StepMode::ClusterOnly).unwrap();
    assert_eq!((r.alpha, r.total), (1.0, r.l1));
    assert_eq!((state.cluster_queue.len(), state.instance_queue.len()), (2, 16));
}

#[test]
fn overflowing_input_aborts_with_non_finite_loss() {
    let cfg = tiny_config();
    let data = tiny_data();
    let mut state = fresh_state(&cfg, &data);
    let batch = DenseArray::matrix(2, 2, vec![1e308, -1e308, 1e308, 1e308]).unwrap();
    let before = state.clone();
    let err = train_step(&mut state, &batch, &AugmentPolicy::identity()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { step: 0, .. }), "{err:?}");
    assert_eq!(state, before);
    let one = DenseArray::matrix(1, 2, vec![0.0, 0.0]).unwrap();
    assert!(train_step(&mut state, &one, &AugmentPolicy::identity()).is_err());
}

#[test]
fn inference_is_deterministic_and_batch_consistent() {
    let cfg = tiny_config();
    let data = tiny_data();
    let (state, _) = train(&cfg, &data).unwrap();
    let all = infer(&state.encoder, data.x()).unwrap();
    assert_eq!(all, infer(&state.encoder, data.x()).unwrap());
    for (i, &label) in all.iter().enumerate() {
        assert_eq!(state.encoder.assign(data.row(i)).unwrap().argmax(), label);
    }
}

#[test]
fn boundary_points_go_to_cluster_zero() {
    let cfg = tiny_config();
    let data = tiny_data();
    let mut state = fresh_state(&cfg, &data);
    // Mirror-image prototypes: every feature orthogonal to them is a tie.
    let protos = state.encoder.params.get_mut(PROTOTYPES).unwrap();
    let d = protos.cols();
    let mut row = vec![0.0; d];
    row[0] = 1.0;
    let mirrored: Vec<f64> = row.iter().chain(row.iter()).cloned().collect();
    *protos = DenseArray::matrix(2, d, mirrored).unwrap();
    let labels = infer(&state.encoder, data.x()).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
}

#[test]
fn convergence_rule() {
    let flat = vec![1.0; 30];
    assert!(has_converged(&flat, 20, 1e-4));
    assert!(!has_converged(&flat[..20], 20, 1e-4));
    assert!(!has_converged(&flat, 20, 0.0));
    let falling: Vec<f64> = (0..30).map(|i| 10.0 - i as f64).collect();
    assert!(!has_converged(&falling, 20, 1e-4));
}

#[test]
fn dataset_must_cover_a_batch() {
    let data = tiny_data();
    let cfg = TrainConfig {
        batch_size: Some(100),
        ..tiny_config()
    };
    assert!(matches!(Trainer::new(&cfg, &data), Err(Error::Config(_))));
}

#[test]
fn momentum_branch_never_receives_gradients() {
    let cfg = tiny_config();
    let data = tiny_data();
    let state = fresh_state(&cfg, &data);
    let mut g = Graph::new();
    let bound = state.momentum.bind(&mut g).unwrap();
    let x = g.constant(data.gather(&[0, 1, 2])).unwrap();
    let f = bound.features(&mut g, x).unwrap();
    let s = g.sum(f).unwrap();
    let loss = g.mean(s).unwrap();
    g.backward(loss).unwrap();
    assert!(g.param_grads().is_empty());
}
