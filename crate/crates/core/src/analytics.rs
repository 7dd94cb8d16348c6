//! Closed-form moment evolution, Fourier-type metrics and the drift region.

use crate::density::{DiscreteDensity, ModelSpec};
use rayon::prelude::*;

/// `m0 e^{alpha_1 t}`.
pub fn mean_at(m0: f64, model: &ModelSpec, t: f64) -> f64 {
    m0 * (model.alpha1() * t).exp()
}

/// `int_0^t e^{b (t - s) + a s} ds`, equal to `t e^{b t}` when `a = b`.
fn exp_integral(a: f64, b: f64, t: f64) -> f64 {
    let d = a - b;
    if d == 0.0 {
        t * (b * t).exp()
    } else {
        (b * t).exp() * (d * t).exp_m1() / d
    }
}

/// Variance at time `t` of the solution started from a density with mean
/// `m0` and variance `var0`.
///
/// The second moment obeys `M2' = alpha_2 M2 + beta M1 + 2 gamma M1^2` with
/// `beta = Var X + Var Y` and `gamma = E[X] E[Y]`. The degenerate rates
/// `alpha_1 = alpha_2` and `2 alpha_1 = alpha_2` are handled by
/// [`exp_integral`].
pub fn variance_at(var0: f64, m0: f64, model: &ModelSpec, t: f64) -> f64 {
    let a1 = model.alpha1();
    let a2 = model.alpha(2.0);
    let beta = model.law_x.variance() + model.law_y.variance();
    let gamma = model.law_x.mean() * model.law_y.mean();
    let m2_0 = var0 + m0 * m0;
    let m2 = (a2 * t).exp() * m2_0
        + beta * m0 * exp_integral(a1, a2, t)
        + 2.0 * gamma * m0 * m0 * exp_integral(2.0 * a1, a2, t);
    let m1 = mean_at(m0, model, t);
    m2 - m1 * m1
}

/// Limit variance `(Var X + Var Y) m0 / |alpha_2|` of a conservative model.
pub fn stationary_variance(m0: f64, model: &ModelSpec) -> f64 {
    (model.law_x.variance() + model.law_y.variance()) * m0 / model.alpha(2.0).abs()
}

pub fn alpha(model: &ModelSpec, r: f64) -> f64 {
    model.alpha(r)
}

pub fn delta(model: &ModelSpec, r: f64) -> f64 {
    model.delta(r)
}

/// `Gamma(delta + n) / (Gamma(delta) Gamma(n + 1))`, the growth factor of
/// the mean of the `n`-th Wild term.
pub fn gamma_ratio(delta: f64, n: usize) -> f64 {
    let n = n as f64;
    (libm::lgamma(delta + n) - libm::lgamma(delta) - libm::lgamma(n + 1.0)).exp()
}

/// Partial sum `sum_{n<=n_max} e^{-t} (1 - e^{-t})^n gamma_ratio(delta, n)`,
/// whose limit is `e^{(delta - 1) t}`.
pub fn gamma_series(delta: f64, t: f64, n_max: usize) -> f64 {
    let log_q = (-(-t).exp_m1()).ln();
    // Add the smallest terms first.
    (0..=n_max)
        .rev()
        .map(|n| {
            let log_ratio =
                libm::lgamma(delta + n as f64) - libm::lgamma(delta) - libm::lgamma(n as f64 + 1.0);
            (-t + n as f64 * log_q + log_ratio).exp()
        })
        .sum()
}

/// Value above which a metric estimate is reported as infinite.
pub const INFINITY_THRESHOLD: f64 = 1e12;

/// Grid estimate of a supremum.
///
/// `value` is the largest of the grid ratios and, when supplied, the analytic
/// limit at the singular endpoint (`z -> 1` or `xi -> 0`). Without the
/// endpoint it is a lower bound of the true supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEstimate {
    pub value: f64,
    pub infinite: bool,
    pub grid: Vec<f64>,
    pub r: f64,
    /// Largest ratio over the grid points alone.
    pub grid_max: f64,
    /// Analytic endpoint limit, if it was included.
    pub endpoint: Option<f64>,
}

impl MetricEstimate {
    pub fn from_ratios(grid: Vec<f64>, ratios: &[f64], r: f64, endpoint: Option<f64>) -> Self {
        let grid_max = ratios.iter().copied().fold(0.0, f64::max);
        let value = endpoint.map_or(grid_max, |e| e.max(grid_max));
        Self {
            infinite: !(value <= INFINITY_THRESHOLD),
            value,
            grid,
            r,
            grid_max,
            endpoint,
        }
    }
}

/// 101 points `z = 1 - u` with `u` log-spaced on `[1e-4, 0.999]`.
pub fn default_zgrid() -> Vec<f64> {
    logspace(1e-4, 0.999, 101)
        .into_iter()
        .map(|u| 1.0 - u)
        .collect()
}

/// 101 log-spaced points on `[1e-4, 10]`.
pub fn default_xigrid() -> Vec<f64> {
    logspace(1e-4, 10.0, 101)
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn differences(f: &DiscreteDensity, g: &DiscreteDensity) -> Vec<f64> {
    let n = f.probs().len().max(g.probs().len());
    (0..n).map(|v| f.prob(v) - g.prob(v)).collect()
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// Falling-factorial moments (when `factorial`) or raw moments of a signed
/// vector, orders `1..=k`.
fn signed_moments(diff: &[f64], k: usize, factorial: bool) -> Vec<f64> {
    (1..=k)
        .map(|order| {
            diff.iter()
                .enumerate()
                .map(|(v, &d)| {
                    let x = v as f64;
                    let w = if factorial {
                        (0..order).map(|i| x - i as f64).product::<f64>()
                    } else {
                        x.powi(order as i32)
                    };
                    w * d
                })
                .sum()
        })
        .collect()
}

/// Limit of `|sum_k c_k s^k / k!| / s^r` as `s -> 0`, where `c_k` are moment
/// differences and `scale_k` the corresponding moment sizes used to decide
/// which differences vanish.
fn endpoint_limit(diff_moments: &[f64], scale: &[f64], r: f64) -> f64 {
    for (i, (&d, &s)) in diff_moments.iter().zip(scale).enumerate() {
        let order = (i + 1) as f64;
        if order > r + 1e-12 {
            return 0.0;
        }
        if d.abs() > 1e-9 * s.max(1.0) {
            if (order - r).abs() <= 1e-12 {
                let fact: f64 = (1..=i + 1).map(|j| j as f64).product();
                return d.abs() / fact;
            }
            return f64::INFINITY;
        }
    }
    0.0
}

fn moment_scale(f: &DiscreteDensity, g: &DiscreteDensity, k: usize, factorial: bool) -> Vec<f64> {
    let abs_sum: Vec<f64> = (0..f.probs().len().max(g.probs().len()))
        .map(|v| f.prob(v) + g.prob(v))
        .collect();
    signed_moments(&abs_sum, k, factorial)
}

/// `sup_z |f^(z) - g^(z)| / (1 - z)^r` over `zgrid`, combined with the exact
/// limit at `z -> 1`.
///
/// For `r > 1` the true supremum is finite only when the means agree; the
/// endpoint limit is `+inf` otherwise.
pub fn d_r(f: &DiscreteDensity, g: &DiscreteDensity, r: f64, zgrid: &[f64]) -> MetricEstimate {
    let diff = differences(f, g);
    let ratios: Vec<f64> = zgrid
        .iter()
        .map(|&z| horner(&diff, z).abs() / (1.0 - z).powf(r))
        .collect();
    let k = r.floor().max(1.0) as usize;
    let endpoint = endpoint_limit(
        &signed_moments(&diff, k, true),
        &moment_scale(f, g, k, true),
        r,
    );
    MetricEstimate::from_ratios(zgrid.to_vec(), &ratios, r, Some(endpoint))
}

/// `sup_xi |f~(xi) - g~(xi)| / xi^r` over `xigrid`, combined with the exact
/// limit at `xi -> 0`.
pub fn d_r_star(
    f: &DiscreteDensity,
    g: &DiscreteDensity,
    r: f64,
    xigrid: &[f64],
) -> MetricEstimate {
    let diff = differences(f, g);
    let ratios: Vec<f64> = xigrid
        .iter()
        .map(|&xi| horner(&diff, (-xi).exp()).abs() / xi.powf(r))
        .collect();
    let k = r.floor().max(1.0) as usize;
    let endpoint = endpoint_limit(
        &signed_moments(&diff, k, false),
        &moment_scale(f, g, k, false),
        r,
    );
    MetricEstimate::from_ratios(xigrid.to_vec(), &ratios, r, Some(endpoint))
}

/// `d_r` from generating-function values on a shared grid (grid only).
pub fn d_r_values(fhat: &[f64], ghat: &[f64], r: f64, zgrid: &[f64]) -> MetricEstimate {
    let ratios: Vec<f64> = zgrid
        .iter()
        .zip(fhat.iter().zip(ghat))
        .map(|(&z, (a, b))| (a - b).abs() / (1.0 - z).powf(r))
        .collect();
    MetricEstimate::from_ratios(zgrid.to_vec(), &ratios, r, None)
}

/// `d_r*` from Laplace-transform values on a shared grid (grid only).
pub fn d_r_star_values(ftil: &[f64], gtil: &[f64], r: f64, xigrid: &[f64]) -> MetricEstimate {
    let ratios: Vec<f64> = xigrid
        .iter()
        .zip(ftil.iter().zip(gtil))
        .map(|(&xi, (a, b))| (a - b).abs() / xi.powf(r))
        .collect();
    MetricEstimate::from_ratios(xigrid.to_vec(), &ratios, r, None)
}

/// `psi(1 + d) = a^{1+d} + b^{1+d} - 1 - (1 + d)(a + b - 1)`, written so
/// that small `d` keeps full relative precision. Its sign is the sign of
/// `alpha_r / r - alpha_1` at `r = 1 + d`.
fn psi(a: f64, b: f64, d: f64) -> f64 {
    a * (d * a.ln()).exp_m1() + b * (d * b.ln()).exp_m1() - d * (a + b - 1.0)
}

/// `a (ln a - 1) + b (ln b - 1) + 1`, the slope of `alpha_r / r` at `r = 1`
/// minus `alpha_1`.
pub fn drift_criterion(a: f64, b: f64) -> f64 {
    a * (a.ln() - 1.0) + b * (b.ln() - 1.0) + 1.0
}

/// Both deciders of the drift-region condition for one `(E[X], E[Y])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDecision {
    pub ex: f64,
    pub ey: f64,
    /// Value of [`drift_criterion`].
    pub criterion: f64,
    /// Derivative decider: `criterion < 0`.
    pub by_derivative: bool,
    /// Search decider: some `r` in `(1, 2]` on the search grid has a
    /// negative gap `alpha_r / r - alpha_1`.
    pub by_search: bool,
    /// Smallest gap found by the search and where.
    pub min_gap: f64,
    pub argmin_r: f64,
}

impl DriftDecision {
    pub fn agree(&self) -> bool {
        self.by_derivative == self.by_search
    }
}

/// Search grid for `r - 1`: steps of `1e-3` up to 1, refined geometrically
/// on `[1e-9, 1e-3]` where the gap changes sign for near-boundary points.
pub fn drift_search_grid() -> Vec<f64> {
    let mut d = logspace(1e-9, 1e-3, 61);
    d.pop();
    d.extend((1..=1000).map(|k| k as f64 * 1e-3));
    d
}

/// The plain `1e-3` search grid without near-endpoint refinement.
pub fn drift_coarse_grid() -> Vec<f64> {
    (1..=1000).map(|k| k as f64 * 1e-3).collect()
}

pub fn drift_decide_with(ex: f64, ey: f64, search: &[f64]) -> DriftDecision {
    let criterion = drift_criterion(ex, ey);
    let (min_gap, argmin_r) = search
        .iter()
        .map(|&d| (psi(ex, ey, d) / (1.0 + d), 1.0 + d))
        .fold(
            (f64::INFINITY, f64::NAN),
            |acc, x| if x.0 < acc.0 { x } else { acc },
        );
    DriftDecision {
        ex,
        ey,
        criterion,
        by_derivative: criterion < 0.0,
        by_search: min_gap < 0.0,
        min_gap,
        argmin_r,
    }
}

pub fn drift_decide(ex: f64, ey: f64) -> DriftDecision {
    drift_decide_with(ex, ey, &drift_search_grid())
}

/// True iff some `r` in `(1, 2]` has `alpha_r / r < alpha_1`.
pub fn drift_region(ex: f64, ey: f64) -> bool {
    drift_decide(ex, ey).by_derivative
}

/// Evaluates [`drift_decide`] on `{k h : k = 1..n}^2` restricted to
/// `ex + ey > 1`, in parallel, returning points in row-major order.
pub fn region_scan(n: usize, h: f64) -> Vec<DriftDecision> {
    region_scan_with(n, h, &drift_search_grid())
}

pub fn region_scan_with(n: usize, h: f64, search: &[f64]) -> Vec<DriftDecision> {
    let points: Vec<(f64, f64)> = (1..=n)
        .flat_map(|i| (1..=n).map(move |j| (i as f64 * h, j as f64 * h)))
        .filter(|(a, b)| a + b > 1.0)
        .collect();
    points
        .par_iter()
        .map(|&(a, b)| drift_decide_with(a, b, search))
        .collect()
}

/// CSV with columns `ex,ey,inside`.
pub fn region_csv(points: &[DriftDecision]) -> String {
    let mut out = String::from("ex,ey,inside\n");
    for p in points {
        out.push_str(&format!(
            "{:.16e},{:.16e},{}\n",
            p.ex, p.ey, p.by_derivative
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{hgt_case1, mutation_case2, OffspringLaw};
    use approx::assert_relative_eq;

    fn case1() -> ModelSpec {
        let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
        ModelSpec::new(x, y)
    }

    #[test]
    fn mean_examples() {
        assert_relative_eq!(mean_at(5.0, &case1(), 3.0), 5.0, epsilon = 1e-14);
        let (x, y) = mutation_case2(0.2, 0.1).unwrap();
        let m = ModelSpec::new(x, y);
        assert_relative_eq!(mean_at(1.0, &m, 2.0), 0.6f64.exp(), epsilon = 1e-14);
        assert_eq!(mean_at(1.0, &m, 0.0), 1.0);
    }

    #[test]
    fn variance_examples() {
        let m = case1();
        assert_relative_eq!(stationary_variance(5.0, &m), 8.125, epsilon = 1e-12);
        assert_relative_eq!(variance_at(0.0, 5.0, &m, 200.0), 8.125, epsilon = 1e-10);
        let v1 = 8.125 * (1.0 - (-0.32f64).exp());
        assert_relative_eq!(variance_at(0.0, 5.0, &m, 1.0), v1, epsilon = 1e-12);
        assert_relative_eq!(v1, 2.2251, epsilon = 1e-4);
        assert_relative_eq!(variance_at(1.5, 5.0, &m, 0.0), 1.5, epsilon = 1e-14);
    }

    #[test]
    fn variance_degenerate_rates() {
        // X = {0: 1/2, 2: 1/2}, Y = delta_0: alpha_1 = 0 and alpha_2 = 0.
        let m = ModelSpec::new(
            OffspringLaw::new(&[(0, 0.5), (2, 0.5)]).unwrap(),
            OffspringLaw::point_mass(0),
        );
        assert_eq!(m.alpha(2.0), 0.0);
        // M2' = beta M1 with beta = 1, so the variance grows like m0 t.
        assert_relative_eq!(variance_at(0.0, 3.0, &m, 2.0), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(alpha(&case1(), 2.0), -0.32, epsilon = 1e-12);
        assert!(alpha(&case1(), 1.0).abs() < 1e-15);
        let (x, y) = mutation_case2(0.2, 0.1).unwrap();
        assert_relative_eq!(alpha(&ModelSpec::new(x, y), 1.0), 0.3, epsilon = 1e-12);
        assert_relative_eq!(delta(&case1(), 2.0), 0.68, epsilon = 1e-12);
    }

    #[test]
    fn metric_examples() {
        let f = DiscreteDensity::from_pointmass(1, 4).unwrap();
        let g = DiscreteDensity::new(vec![0.5, 0.0, 0.5, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(d_r(&f, &f, 2.0, &default_zgrid()).value, 0.0);
        assert_eq!(d_r_star(&f, &f, 2.0, &default_xigrid()).value, 0.0);
        let e = d_r(&f, &g, 2.0, &default_zgrid());
        // Rounding in f^ - g^ near z = 1 is amplified by (1 - z)^-2.
        assert_relative_eq!(e.grid_max, 0.5, epsilon = 1e-7);
        assert_relative_eq!(e.value, 0.5, epsilon = 1e-7);
        let s = d_r_star(&f, &g, 2.0, &default_xigrid());
        assert_relative_eq!(s.value, 0.5, epsilon = 1e-12);
        assert!((s.grid_max - 0.5).abs() < 1e-4);
    }

    #[test]
    fn unequal_means_diverge() {
        let f = DiscreteDensity::from_pointmass(0, 2).unwrap();
        let g = DiscreteDensity::from_pointmass(1, 2).unwrap();
        let mut grid = default_zgrid();
        grid.push(1.0 - 1e-6);
        let e = d_r(&f, &g, 2.0, &grid);
        assert!(e.infinite);
        assert!(e.grid_max >= 1e6 * 0.99);
        // For r = 1 the supremum is the mean difference.
        assert_relative_eq!(d_r(&f, &g, 1.0, &grid).value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_series_identity() {
        let s = gamma_series(1.3, 1.0, 200);
        assert!((s - 0.3f64.exp()).abs() < 1e-10);
        assert_relative_eq!(gamma_ratio(1.0, 17), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn drift_examples() {
        assert!(drift_region(1.0, 1.0));
        let d = drift_decide(0.9, 0.9);
        assert!(d.by_derivative && d.by_search);
        assert_relative_eq!(d.criterion, -0.9896, epsilon = 1e-4);
        let d = drift_decide(3.0, 0.1);
        assert!(!d.by_derivative && !d.by_search);
        assert_relative_eq!(d.criterion, 0.9656, epsilon = 1e-4);
    }

    #[test]
    fn region_scan_excludes_low_sum_and_agrees() {
        let pts = region_scan(60, 0.05);
        assert!(pts.iter().all(|p| p.ex + p.ey > 1.0));
        for p in &pts {
            if p.criterion.abs() > 1e-6 {
                assert!(p.agree(), "{p:?}");
            }
            if p.ex.max(p.ey) >= std::f64::consts::E && p.ex.min(p.ey) >= 1.0 {
                assert!(!p.by_derivative && !p.by_search);
            }
        }
        let csv = region_csv(&pts);
        assert!(csv.starts_with("ex,ey,inside\n"));
    }
}
