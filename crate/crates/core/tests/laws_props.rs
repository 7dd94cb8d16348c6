mod common;

use dlc_core::analytics::logspace;
use dlc_core::laws::{graze, GrazingSpec, Which};
use proptest::prelude::*;

fn grid101() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Grid supremum of `|k(xi)|^r / xi^r` for the cumulant `k`.
fn cumulant_ratio_sup(law: &dlc_core::laws::OffspringLaw, r: f64, lo: f64) -> f64 {
    logspace(lo, 10.0, 200)
        .into_iter()
        .map(|xi| (law.cumulant(xi).unwrap().abs() / xi).powf(r))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pgf_deficit_bounded_by_mean(law in common::law(8)) {
        for z in grid101() {
            let lhs = 1.0 - law.pgf(z).unwrap();
            prop_assert!(lhs <= (1.0 - z) * law.mean() + 1e-14, "z = {z}: {lhs} vs {}", (1.0 - z) * law.mean());
        }
    }

    #[test]
    fn cumulant_ratio_tends_to_mean_power(law in common::law(8), r in prop::sample::select(vec![1.25, 1.5, 1.75, 2.0])) {
        prop_assume!(law.mean() > 1e-3);
        let target = law.mean().powf(r);
        let coarse = cumulant_ratio_sup(&law, r, 1e-2);
        let medium = cumulant_ratio_sup(&law, r, 1e-4);
        let fine = cumulant_ratio_sup(&law, r, 1e-6);
        prop_assert!(fine <= target * (1.0 + 1e-9));
        prop_assert!(coarse <= medium * (1.0 + 1e-12) && medium <= fine * (1.0 + 1e-12));
        prop_assert!(fine >= 0.99 * target, "fine {fine} target {target}");
    }

    #[test]
    fn grazed_pgf_identities(
        tx in common::law(4),
        ty in common::law(4),
        b1 in 0.1f64..3.0,
        b2 in 0.1f64..3.0,
        eps in 0.001f64..0.3,
    ) {
        let spec = GrazingSpec::new(tx.clone(), ty.clone(), b1, b2, 1.0, eps).unwrap();
        let x = graze(&spec, Which::X);
        let y = graze(&spec, Which::Y);
        for z in grid101() {
            let ex = b1 * eps * tx.pgf(z).unwrap() + (1.0 - b1 * eps) * z;
            let ey = b2 * eps * ty.pgf(z).unwrap() + (1.0 - b2 * eps);
            prop_assert!((x.pgf(z).unwrap() - ex).abs() < 1e-12);
            prop_assert!((y.pgf(z).unwrap() - ey).abs() < 1e-12);
        }
    }
}
