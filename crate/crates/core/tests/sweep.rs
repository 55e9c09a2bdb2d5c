use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reram_ft::data::{Dataset, TeacherTask};
use reram_ft::ftol::Activation;
use reram_ft::harness::sweep::{
    clean_accuracy, monte_carlo, run_sweep, summary_csv, to_csv, Method, Prepared, SimConfig,
    SweepConfig, CSV_HEADER, DEFAULT_RATES,
};
use reram_ft::harness::{Model, ModelLayer};
use reram_ft::xbar::FaultModel;
use reram_ft::Matrix;

fn layer(
    rng: &mut ChaCha8Rng,
    i: usize,
    o: usize,
    pruned: Vec<usize>,
    act: Activation,
) -> ModelLayer {
    let mut w = Matrix::from_vec(
        i,
        o,
        (0..i * o).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    for &c in &pruned {
        for r in 0..i {
            w.set(r, c, 0.0);
        }
    }
    ModelLayer {
        weight: w,
        bias: (0..o).map(|_| rng.random_range(-0.2..0.2)).collect(),
        activation: act,
        pruned,
    }
}

/// 10 -> 24 -> 3 with 14 of the hidden columns pruned.
fn model() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pruned = (0..24).filter(|c| c % 12 < 7).collect();
    Model {
        layers: vec![
            layer(&mut rng, 10, 24, pruned, Activation::Relu),
            layer(&mut rng, 24, 3, Vec::new(), Activation::Identity),
        ],
    }
}

fn test_set() -> Dataset {
    TeacherTask {
        dim: 10,
        classes: 3,
        train: 10,
        test: 300,
        seed: 4,
    }
    .generate()
    .test
}

#[test]
fn zero_rate_gives_clean_accuracy_with_no_spread() {
    let (m, data, sim) = (model(), test_set(), SimConfig::default());
    let clean = clean_accuracy(&m, &data, &sim).unwrap();
    for method in [Method::NoVoting, Method::Voting, Method::VotingEmbedded] {
        let mc = monte_carlo(&m, &data, 0.0, method, 5, 3, &sim).unwrap();
        assert_eq!(mc.mean, clean, "{method}");
        assert_eq!(mc.variance, 0.0);
    }
}

#[test]
fn single_trial_has_zero_variance() {
    let mc = monte_carlo(
        &model(),
        &test_set(),
        0.01,
        Method::Voting,
        1,
        3,
        &SimConfig::default(),
    )
    .unwrap();
    assert_eq!(mc.variance, 0.0);
    assert_eq!(mc.accuracies, vec![mc.mean]);
}

#[test]
fn zero_trials_is_an_error() {
    assert!(monte_carlo(
        &model(),
        &test_set(),
        0.01,
        Method::Voting,
        0,
        3,
        &SimConfig::default()
    )
    .is_err());
}

#[test]
fn trials_do_not_depend_on_evaluation_order() {
    let (m, data, sim) = (model(), test_set(), SimConfig::default());
    let mc = monte_carlo(&m, &data, 0.02, Method::Voting, 6, 9, &sim).unwrap();
    let p = Prepared::new(&m, Method::Voting, &sim).unwrap();
    let fault = FaultModel::with_rate(0.02, 9).unwrap();
    for t in (0..6).rev() {
        assert_eq!(
            p.trial_accuracy(&data, &fault, t).unwrap(),
            mc.accuracies[t as usize]
        );
    }
}

#[test]
fn faults_actually_change_results() {
    let (m, data, sim) = (model(), test_set(), SimConfig::default());
    let mc = monte_carlo(&m, &data, 0.05, Method::NoVoting, 8, 1, &sim).unwrap();
    assert!(mc.variance > 0.0, "{mc:?}");
}

fn small_sweep() -> SweepConfig {
    SweepConfig {
        trials: 3,
        ..SweepConfig::default()
    }
}

#[test]
fn sweep_has_one_row_per_rate_and_method() {
    let rows = run_sweep(&small_sweep(), &model(), &test_set()).unwrap();
    assert_eq!(rows.len(), DEFAULT_RATES.len() * 2);
    assert_eq!(rows.len(), 18);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.rate, DEFAULT_RATES[i / 2]);
        assert_eq!(r.method, [Method::NoVoting, Method::Voting][i % 2]);
        assert_eq!(r.trials, 3);
        assert_eq!(r.seed, 2024);
    }
    let csv = to_csv(&rows);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 18);
}

#[test]
fn sweep_is_reproducible_from_its_seed() {
    let (m, data) = (model(), test_set());
    let a = to_csv(&run_sweep(&small_sweep(), &m, &data).unwrap());
    let b = to_csv(&run_sweep(&small_sweep(), &m, &data).unwrap());
    assert_eq!(a, b);
    let c = to_csv(
        &run_sweep(
            &SweepConfig {
                seed: 7,
                ..small_sweep()
            },
            &m,
            &data,
        )
        .unwrap(),
    );
    assert_ne!(a, c);
}

#[test]
fn summary_lists_the_four_metrics() {
    let (m, data, cfg) = (model(), test_set(), small_sweep());
    let rows = run_sweep(&cfg, &m, &data).unwrap();
    let clean = clean_accuracy(&m, &data, &cfg.sim).unwrap();
    let s = summary_csv(&rows, clean);
    let keys: Vec<&str> = s.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        keys,
        [
            "metric",
            "clean_accuracy",
            "tolerated_rate_no_voting",
            "tolerated_rate_voting",
            "tolerance_ratio"
        ]
    );
}

#[test]
fn embedded_copies_behave_like_side_by_side_copies_without_faults() {
    let (m, data, sim) = (model(), test_set(), SimConfig::default());
    let side = Prepared::new(&m, Method::Voting, &sim).unwrap();
    let emb = Prepared::new(&m, Method::VotingEmbedded, &sim).unwrap();
    let none = FaultModel::fault_free();
    let (a, b) = (
        side.trial_layers(&none, 0).unwrap(),
        emb.trial_layers(&none, 0).unwrap(),
    );
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.duplicates, y.duplicates);
    }
    assert_eq!(
        side.trial_accuracy(&data, &none, 0).unwrap(),
        emb.trial_accuracy(&data, &none, 0).unwrap()
    );
}

#[test]
fn embedding_without_capacity_is_rejected() {
    let mut m = model();
    // Two pruned columns cannot host 2 copies for each of 22 live columns.
    m.layers[0].pruned = vec![0, 1];
    let err = Prepared::new(&m, Method::VotingEmbedded, &SimConfig::default())
        .err()
        .unwrap();
    assert!(matches!(err, reram_ft::Error::Capacity(_)), "{err}");
}
