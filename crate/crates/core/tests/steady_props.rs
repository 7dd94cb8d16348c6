use dlc_core::steady::{
    grazing_steady_pgf, hgt_steady_density, hgt_steady_pgf, size_biased_check, HgtParams,
};

/// One parameter set per closed-form regime: `p2 > 0`, `p2 = 0 < q2`, `q2 = 0`.
fn regimes() -> Vec<HgtParams> {
    vec![
        HgtParams::new(0.4, 0.1, 0.2, 0.1, 3.0).unwrap(),
        HgtParams::new(0.5, 0.0, 0.3, 0.1, 4.0).unwrap(),
        HgtParams::new(0.6, 0.1, 0.2, 0.0, 5.0).unwrap(),
    ]
}

fn grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

#[test]
fn quadrature_and_closed_form_agree() {
    for p in regimes() {
        let g = p.grazing_spec(1.0, 0.1).unwrap();
        for z in grid() {
            let a = grazing_steady_pgf(&g, z).unwrap();
            let b = hgt_steady_pgf(&p, z).unwrap();
            assert!((a - b).abs() < 1e-8, "{p:?} z = {z}: {a} vs {b}");
        }
    }
}

#[test]
fn steady_pgf_derivatives_are_nonnegative() {
    // Forward differences of orders 1..3 in z; for g(z) = G(1 - z) these are
    // the sign conditions of complete monotonicity of G.
    for p in regimes() {
        let g = p.grazing_spec(1.0, 0.1).unwrap();
        let mut v: Vec<f64> = grid()
            .into_iter()
            .map(|z| grazing_steady_pgf(&g, z).unwrap())
            .collect();
        for order in 1..=3 {
            v = v.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(v.iter().all(|&d| d >= -1e-12), "{p:?}: order {order}");
        }
    }
}

#[test]
fn steady_moments() {
    for p in regimes() {
        let d = hgt_steady_density(&p, 400).unwrap();
        assert!(d.tail_mass() < 1e-12);
        assert!((d.mean() - p.m0).abs() < 1e-9 + d.tail_mass(), "{p:?}");
        if p.q[2] == 0.0 {
            assert!((d.variance() - p.m0 * p.p[0] / p.q[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn size_biased_identity_characterizes_steady_state() {
    for p in regimes() {
        let g = p.grazing_spec(1.0, 0.1).unwrap();
        let d = hgt_steady_density(&p, 400).unwrap();
        assert!(size_biased_check(&d, &g).unwrap() < 1e-8, "{p:?}");
    }
}
