//! Generators shared by the property tests.

#![allow(dead_code)]

use dlc_core::density::{DiscreteDensity, ModelSpec};
use dlc_core::laws::{hgt_case1, OffspringLaw};
use proptest::prelude::*;

/// Probability vector built from raw positive weights.
pub fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Law on `{0, ..., n - 1}` for `n` in `1..=max_len`.
pub fn law(max_len: usize) -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec(0.01f64..1.0, 1..=max_len).prop_map(|w| {
        let p = normalize(&w);
        let entries: Vec<(u32, f64)> = p.iter().enumerate().map(|(v, &q)| (v as u32, q)).collect();
        OffspringLaw::new(&entries).expect("valid law")
    })
}

/// Density with support in `{0, ..., max_len - 1}`, stored with truncation `k`.
pub fn density(max_len: usize, k: usize) -> impl Strategy<Value = DiscreteDensity> {
    prop::collection::vec(0.01f64..1.0, 1..=max_len).prop_map(move |w| {
        let mut p = normalize(&w);
        p.resize(k + 1, 0.0);
        DiscreteDensity::new(p, 0.0).expect("valid density")
    })
}

pub fn model(max_len: usize) -> impl Strategy<Value = ModelSpec> {
    (law(max_len), law(max_len)).prop_map(|(x, y)| ModelSpec::new(x, y))
}

/// Conservative horizontal-transfer model: `p_h = p_l - p_d`.
pub fn conservative_model() -> impl Strategy<Value = ModelSpec> {
    (0.1f64..0.5, 0.0f64..1.0).prop_map(|(p_l, u)| {
        let p_d = u * (p_l - 0.05);
        let (x, y) = hgt_case1(p_l, p_d, p_l - p_d).expect("valid parameters");
        ModelSpec::new(x, y)
    })
}

pub fn case1() -> ModelSpec {
    let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
    ModelSpec::new(x, y)
}

/// Mean and standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
