use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use tcc::autodiff::{check_gradient, DenseArray, Graph, OpKind, ParameterStore, Var};
use tcc::trainer::{CheckFixture, LossKind, TrainConfig};

const EPS: f64 = 1e-5;
const OP_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> DenseArray {
    let n = shape.iter().product();
    DenseArray::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Reduces any node to a scalar through fixed random weights so every
/// output entry carries a distinct gradient.
fn probe(g: &mut Graph, out: Var, rng_seed: u64) -> Var {
    let v = g.value(out).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = random(&mut rng, v.shape(), -1.0, 1.0);
    let wv = g.constant(w).unwrap();
    let m = g.mul(out, wv).unwrap();
    g.sum(m).unwrap()
}

type OpBuilder = fn(&mut Graph, Var, Var) -> Var;

fn check_op(name: &str, a_shape: &[usize], b_shape: &[usize], lo: f64, hi: f64, op: OpBuilder) {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + 1);
        let mut store = ParameterStore::new();
        store.insert("a", random(&mut rng, a_shape, lo, hi)).unwrap();
        store.insert("b", random(&mut rng, b_shape, lo, hi)).unwrap();
        let report = check_gradient(&store, EPS, |g, s| {
            let a = s.bind(g, "a")?;
            let b = s.bind(g, "b")?;
            let out = op(g, a, b);
            Ok(probe(g, out, seed))
        })
        .unwrap();
        assert!(
            report.max_relative_error < OP_TOL,
            "{name} seed {seed}: {report:?}"
        );
    }
}

#[test]
fn binary_ops_match_finite_differences() {
    check_op("matmul", &[3, 4], &[4, 2], -1.0, 1.0, |g, a, b| g.matmul(a, b).unwrap());
    check_op("matmul_nt", &[3, 4], &[5, 4], -1.0, 1.0, |g, a, b| g.matmul_nt(a, b).unwrap());
    check_op("matmul_tn", &[4, 3], &[4, 2], -1.0, 1.0, |g, a, b| g.matmul_tn(a, b).unwrap());
    check_op("add", &[3, 2], &[3, 2], -1.0, 1.0, |g, a, b| g.add(a, b).unwrap());
    check_op("sub", &[3, 2], &[3, 2], -1.0, 1.0, |g, a, b| g.sub(a, b).unwrap());
    check_op("mul", &[3, 2], &[3, 2], -1.0, 1.0, |g, a, b| g.mul(a, b).unwrap());
    check_op("add_row", &[3, 4], &[4], -1.0, 1.0, |g, a, b| g.add_row(a, b).unwrap());
    check_op("row_dot", &[3, 4], &[3, 4], -1.0, 1.0, |g, a, b| g.row_dot(a, b).unwrap());
    check_op("concat_cols", &[3, 2], &[3, 4], -1.0, 1.0, |g, a, b| g.concat_cols(a, b).unwrap());
}

#[test]
fn unary_ops_match_finite_differences() {
    check_op("transpose", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.transpose(a).unwrap());
    check_op("scale", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.scale(a, -2.5).unwrap());
    check_op("add_scalar", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.add_scalar(a, 0.7).unwrap());
    check_op("relu", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.relu(a).unwrap());
    check_op("exp", &[3, 4], &[1], -2.0, 2.0, |g, a, _| g.exp(a).unwrap());
    check_op("log", &[3, 4], &[1], 0.2, 3.0, |g, a, _| g.log(a).unwrap());
    check_op("softmax", &[3, 5], &[1], -3.0, 3.0, |g, a, _| g.softmax(a).unwrap());
    check_op("log_softmax", &[3, 5], &[1], -3.0, 3.0, |g, a, _| g.log_softmax(a).unwrap());
    check_op("l2_normalize", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.l2_normalize(a).unwrap());
    check_op("log_sum_exp", &[3, 5], &[1], -3.0, 3.0, |g, a, _| g.log_sum_exp(a).unwrap());
    check_op("masked_lse", &[3, 5], &[1], -3.0, 3.0, |g, a, _| {
        let mask = (0..15).map(|i| i % 5 != 1 && i != 9).collect();
        g.log_sum_exp_masked(a, Some(mask)).unwrap()
    });
    check_op("sum", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.sum(a).unwrap());
    check_op("mean", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.mean(a).unwrap());
    check_op("select_cols", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.select_cols(a, &[2, 0, 2]).unwrap());
    check_op("select_rows", &[3, 4], &[1], -1.0, 1.0, |g, a, _| g.select_rows(a, &[1, 1, 0]).unwrap());
}

fn small_config() -> TrainConfig {
    TrainConfig {
        clusters: 2,
        hidden: vec![8, 8],
        feature_dim: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn model_losses_match_finite_differences() {
    for seed in 0..10 {
        let fixture = CheckFixture::new(&small_config(), 2, 8, seed).unwrap();
        for kind in LossKind::ALL {
            let report = fixture.check(kind, EPS, None).unwrap();
            assert!(
                report.max_relative_error < MODEL_TOL,
                "{} seed {seed}: {report:?}",
                kind.name()
            );
            assert_eq!(report.entries_checked, fixture.encoder.params.num_entries());
        }
    }
}

#[test]
fn multi_sample_and_normalized_prototypes_check_out() {
    let cfg = TrainConfig {
        gumbel_samples: 3,
        normalize_prototypes: true,
        tau: 0.5,
        ..small_config()
    };
    let fixture = CheckFixture::new(&cfg, 3, 6, 99).unwrap();
    for kind in LossKind::ALL {
        let report = fixture.check(kind, EPS, None).unwrap();
        assert!(report.max_relative_error < MODEL_TOL, "{}: {report:?}", kind.name());
    }
}

#[test]
fn corrupted_backward_rule_is_caught() {
    let fixture = CheckFixture::new(&small_config(), 2, 8, 3).unwrap();
    for op in [OpKind::L2Normalize, OpKind::Softmax, OpKind::MatMul] {
        let report = fixture.check(LossKind::Combined, EPS, Some(op)).unwrap();
        assert!(report.max_relative_error > 1e-2, "{op:?}: {report:?}");
    }
}

proptest! {
    #[test]
    // Logit gaps stay below ~36 so every probability is representable
    // strictly inside (0, 1) in double precision.
    fn softmax_rows_are_distributions(values in prop::collection::vec(-15.0f64..15.0, 12)) {
        let mut g = Graph::new();
        let x = g.constant(DenseArray::matrix(3, 4, values).unwrap()).unwrap();
        let s = g.softmax(x).unwrap();
        let out = g.value(s);
        for i in 0..3 {
            let row = out.row(i);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm(values in prop::collection::vec(-1e3f64..1e3, 8)) {
        prop_assume!(values[..4].iter().any(|v| v.abs() > 1e-3) && values[4..].iter().any(|v| v.abs() > 1e-3));
        let mut g = Graph::new();
        let x = g.constant(DenseArray::matrix(2, 4, values).unwrap()).unwrap();
        let n = g.l2_normalize(x).unwrap();
        for i in 0..2 {
            let norm = g.value(n).row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluation_is_deterministic(seed in 0u64..1000) {
        let fixture = CheckFixture::new(&small_config(), 2, 4, seed).unwrap();
        let run = || {
            let mut g = Graph::new();
            let l = fixture.build(&mut g, &fixture.encoder.params, LossKind::Combined).unwrap();
            g.scalar(l).to_bits()
        };
        prop_assert_eq!(run(), run());
    }
}
