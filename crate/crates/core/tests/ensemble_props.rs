mod common;

use dlc_core::ensemble::{collide_pair, Ensemble};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn same_seed_same_ensemble() {
    let m = common::case1();
    let run = |seed| {
        let mut e = Ensemble::uniform(5_000, 5, seed).unwrap();
        e.simulate(&m, 3.0).unwrap();
        e.values().to_vec()
    };
    assert_eq!(run(42), run(42));
    assert_ne!(run(42), run(43));
}

#[test]
fn stationary_variance_reached() {
    let m = common::case1();
    let mut e = Ensemble::uniform(100_000, 5, 9).unwrap();
    e.simulate(&m, 30.0).unwrap();
    let rel = (e.variance() / 8.125 - 1.0).abs();
    assert!(rel < 0.05, "variance {}", e.variance());
}

#[test]
fn collision_marginal_moments() {
    let m = common::case1();
    let (x, y) = (&m.law_x, &m.law_y);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (vi, vj) = (4u64, 7u64);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| collide_pair(vi, vj, &m, &mut rng).0 as f64)
        .collect();
    let mean = vi as f64 * x.mean() + vj as f64 * y.mean();
    let var = vi as f64 * x.variance() + vj as f64 * y.variance();
    let (m_hat, se) = common::mean_se(&draws);
    assert!((m_hat - mean).abs() <= 3.0 * se, "mean {m_hat} vs {mean}");
    // Standard error of the sample variance from the fourth central moment.
    let n = draws.len() as f64;
    let c: Vec<f64> = draws.iter().map(|d| (d - m_hat).powi(2)).collect();
    let (v_hat, v_se) = common::mean_se(&c);
    assert!(
        (v_hat * n / (n - 1.0) - var).abs() <= 3.0 * v_se,
        "variance {v_hat} vs {var}"
    );
}
