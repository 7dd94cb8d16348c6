//! Deterministic solvers for `d/dt f = Q+(f, f) - f`.
//!
//! Three independent routes to the solution are provided: the Wild series,
//! fixed-step RK4 time integration, and (for conservative models) the
//! fixed-point iteration `f <- Q+(f, f)` that converges to the steady state.

use crate::density::{CollisionKernel, DensityError, DiscreteDensity, ModelSpec, Regime};
use rayon::prelude::*;
use thiserror::Error;

/// Tail mass at which time integration gives up.
pub const TAIL_ABORT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoltzmannError {
    #[error("tail mass {tail:e} exceeds {TAIL_ABORT:e} at t = {time}; increase K")]
    TailOverflow { time: f64, tail: f64 },
    #[error("fixed-point iteration needs a conservative model, alpha_1 = {0}")]
    NotConservative(f64),
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("invalid time step: dt = {dt}, t_end = {t_end}")]
    InvalidStep { dt: f64, t_end: f64 },
    #[error("time t = {0} must be positive")]
    InvalidTime(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Terms `q_0, ..., q_N` of the Wild expansion.
#[derive(Debug, Clone)]
pub struct WildExpansion {
    pub terms: Vec<DiscreteDensity>,
}

impl WildExpansion {
    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }
}

/// Truncated Wild sum.
///
/// `density` is a sub-probability vector: its total mass is
/// `1 - residual`, where `residual` is the exact weight of the omitted terms.
#[derive(Debug, Clone)]
pub struct WildSolution {
    pub density: DiscreteDensity,
    pub residual: f64,
}

/// `q_0 = f0` and `q_n = (1/n) sum_{j<n} Q+(q_j, q_{n-1-j})`.
pub fn wild_terms(
    f0: &DiscreteDensity,
    model: &ModelSpec,
    n_max: usize,
) -> Result<WildExpansion, BoltzmannError> {
    let kernel = CollisionKernel::new(model, f0.k());
    wild_terms_with(&kernel, f0, n_max)
}

pub fn wild_terms_with(
    kernel: &CollisionKernel,
    f0: &DiscreteDensity,
    n_max: usize,
) -> Result<WildExpansion, BoltzmannError> {
    let mut terms = vec![f0.clone()];
    // Compounds of each term are reused by every later term.
    let mut by_y = vec![kernel.compound_y(f0)?];
    let mut by_x = vec![kernel.compound_x(f0)?];
    let k = f0.k();
    for n in 1..=n_max {
        let parts: Vec<DiscreteDensity> = (0..n)
            .into_par_iter()
            .map(|j| CollisionKernel::qplus_from_compounds(&by_y[j], &by_x[n - 1 - j]))
            .collect();
        let mut probs = vec![0.0; k + 1];
        let mut tail = 0.0;
        for part in &parts {
            for (p, &x) in probs.iter_mut().zip(part.probs()) {
                *p += x;
            }
            tail += part.tail_mass();
        }
        let scale = 1.0 / n as f64;
        probs.iter_mut().for_each(|p| *p *= scale);
        let q = DiscreteDensity::from_parts(probs, tail * scale);
        by_y.push(kernel.compound_y(&q)?);
        by_x.push(kernel.compound_x(&q)?);
        terms.push(q);
    }
    Ok(WildExpansion { terms })
}

/// Weight `e^{-t} (1 - e^{-t})^n` of the `n`-th Wild term, via logarithms.
pub fn wild_weight(t: f64, n: usize) -> f64 {
    let log_q = (-(-t).exp_m1()).ln();
    (-t + n as f64 * log_q).exp()
}

/// Mass `(1 - e^{-t})^{N+1}` of the terms beyond order `N`.
pub fn wild_residual(t: f64, n_max: usize) -> f64 {
    ((n_max + 1) as f64 * (-(-t).exp_m1()).ln()).exp()
}

pub fn wild_sum(expansion: &WildExpansion, t: f64) -> Result<WildSolution, BoltzmannError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(BoltzmannError::InvalidTime(t));
    }
    let k = expansion.terms[0].k();
    let mut probs = vec![0.0; k + 1];
    let mut tail = 0.0;
    for (n, q) in expansion.terms.iter().enumerate() {
        let w = wild_weight(t, n);
        for (p, &x) in probs.iter_mut().zip(q.probs()) {
            *p += w * x;
        }
        tail += w * q.tail_mass();
    }
    Ok(WildSolution {
        density: DiscreteDensity::from_parts(probs, tail),
        residual: wild_residual(t, expansion.order()),
    })
}

pub fn wild_solution(
    f0: &DiscreteDensity,
    model: &ModelSpec,
    t: f64,
    n_max: usize,
) -> Result<WildSolution, BoltzmannError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(BoltzmannError::InvalidTime(t));
    }
    wild_sum(&wild_terms(f0, model, n_max)?, t)
}

/// Sampled solution of the kinetic equation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DiscreteDensity>,
    pub model: ModelSpec,
}

impl Trajectory {
    pub fn last(&self) -> &DiscreteDensity {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// State recorded closest to `t`.
    pub fn state_at(&self, t: f64) -> &DiscreteDensity {
        let idx = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        &self.states[idx]
    }

    /// CSV with columns `t,mean,variance,tail_mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean,variance,tail_mass\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                t,
                s.mean(),
                s.variance(),
                s.tail_mass()
            ));
        }
        out
    }
}

/// State vector of the ODE: probabilities followed by the tail mass.
fn to_state(d: &DiscreteDensity) -> Vec<f64> {
    let mut s = d.probs().to_vec();
    s.push(d.tail_mass());
    s
}

fn from_state(mut s: Vec<f64>) -> DiscreteDensity {
    let tail = s.pop().unwrap();
    DiscreteDensity::from_parts(s, tail)
}

fn rhs(kernel: &CollisionKernel, s: &[f64]) -> Result<Vec<f64>, BoltzmannError> {
    let d = from_state(s.to_vec());
    let gain = kernel.qplus(&d, &d)?;
    let mut out = to_state(&gain);
    // Loss written as f * (total mass): equal to f on the simplex, and it keeps
    // the mass perturbation neutral instead of growing like m^2 - m.
    let mass: f64 = s.iter().sum();
    for (o, &x) in out.iter_mut().zip(s) {
        *o -= x * mass;
    }
    Ok(out)
}

fn rk4_step(kernel: &CollisionKernel, s: &[f64], h: f64) -> Result<Vec<f64>, BoltzmannError> {
    let axpy = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + c * y).collect()
    };
    let k1 = rhs(kernel, s)?;
    let k2 = rhs(kernel, &axpy(s, &k1, 0.5 * h))?;
    let k3 = rhs(kernel, &axpy(s, &k2, 0.5 * h))?;
    let k4 = rhs(kernel, &axpy(s, &k3, h))?;
    Ok((0..s.len())
        .map(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn step_schedule(t_end: f64, dt: f64) -> Result<Vec<f64>, BoltzmannError> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(BoltzmannError::InvalidStep { dt, t_end });
    }
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..=n).map(|i| (i as f64 * dt).min(t_end)).collect();
    if let Some(last) = times.last_mut() {
        *last = t_end;
    }
    Ok(times)
}

/// RK4 integration from `f0` to `t_end`, recording every step.
///
/// The final step is shortened when `t_end` is not a multiple of `dt`.
pub fn integrate(
    f0: &DiscreteDensity,
    model: &ModelSpec,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, BoltzmannError> {
    let kernel = CollisionKernel::new(model, f0.k());
    let mut states = vec![f0.clone()];
    let times = run_rk4(&kernel, f0, t_end, dt, |d| states.push(d.clone()))?;
    Ok(Trajectory {
        times,
        states,
        model: model.clone(),
    })
}

/// Final state of [`integrate`] without keeping the trajectory.
pub fn integrate_to(
    f0: &DiscreteDensity,
    model: &ModelSpec,
    t_end: f64,
    dt: f64,
) -> Result<DiscreteDensity, BoltzmannError> {
    let kernel = CollisionKernel::new(model, f0.k());
    integrate_with(&kernel, f0, t_end, dt)
}

pub fn integrate_with(
    kernel: &CollisionKernel,
    f0: &DiscreteDensity,
    t_end: f64,
    dt: f64,
) -> Result<DiscreteDensity, BoltzmannError> {
    let mut last = f0.clone();
    run_rk4(kernel, f0, t_end, dt, |d| last = d.clone())?;
    Ok(last)
}

fn run_rk4(
    kernel: &CollisionKernel,
    f0: &DiscreteDensity,
    t_end: f64,
    dt: f64,
    mut record: impl FnMut(&DiscreteDensity),
) -> Result<Vec<f64>, BoltzmannError> {
    if f0.k() != kernel.k() {
        return Err(DensityError::MismatchedTruncation(f0.k(), kernel.k()).into());
    }
    let times = step_schedule(t_end, dt)?;
    let mut s = to_state(f0);
    for w in times.windows(2) {
        s = rk4_step(kernel, &s, w[1] - w[0])?;
        let tail = *s.last().unwrap();
        if tail > TAIL_ABORT {
            return Err(BoltzmannError::TailOverflow { time: w[1], tail });
        }
        record(&from_state(s.clone()));
    }
    Ok(times)
}

/// Outcome of [`fixed_point`].
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub density: DiscreteDensity,
    pub iterations: usize,
    /// Last sup-norm change of the generating function on the z-grid.
    pub residual: f64,
}

/// `Q+(f, f)` rescaled to unit total mass. The gain operator multiplies
/// masses, so without the rescaling a rounding error in the mass doubles
/// (relatively) at every iteration.
fn self_collision(
    kernel: &CollisionKernel,
    f: &DiscreteDensity,
) -> Result<DiscreteDensity, BoltzmannError> {
    let next = kernel.qplus(f, f)?;
    let mass = next.total_mass();
    Ok(DiscreteDensity::from_parts(
        next.probs().iter().map(|p| p / mass).collect(),
        next.tail_mass() / mass,
    ))
}

/// The canonical 101-point grid `0, 0.01, ..., 1`.
pub fn uniform_zgrid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Iterates `f <- Q+(f, f)` until the generating function moves by less
/// than `tol` in sup norm on [`uniform_zgrid`].
pub fn fixed_point(
    f0: &DiscreteDensity,
    model: &ModelSpec,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointReport, BoltzmannError> {
    if model.regime() != Regime::ConservedMean {
        return Err(BoltzmannError::NotConservative(model.alpha1()));
    }
    let kernel = CollisionKernel::new(model, f0.k());
    let grid = uniform_zgrid();
    let mut f = f0.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = self_collision(&kernel, &f)?;
        residual = grid
            .iter()
            .map(|&z| (next.pgf(z) - f.pgf(z)).abs())
            .fold(0.0, f64::max);
        f = next;
        if residual < tol {
            return Ok(FixedPointReport {
                density: f,
                iterations: it,
                residual,
            });
        }
    }
    Err(BoltzmannError::MaxIterExceeded {
        iterations: max_iter,
        residual,
    })
}

/// The first `n + 1` iterates `f_0, Q+(f_0, f_0), ...` of the fixed-point map.
pub fn fixed_point_iterates(
    f0: &DiscreteDensity,
    model: &ModelSpec,
    n: usize,
) -> Result<Vec<DiscreteDensity>, BoltzmannError> {
    let kernel = CollisionKernel::new(model, f0.k());
    let mut out = vec![f0.clone()];
    for _ in 0..n {
        let last = out.last().unwrap();
        let next = self_collision(&kernel, last)?;
        out.push(next);
    }
    Ok(out)
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
    fn wild_low_orders() {
        let f0 = DiscreteDensity::from_pointmass(5, 60).unwrap();
        let e = wild_terms(&f0, &case1(), 0).unwrap();
        assert_eq!(e.terms, vec![f0.clone()]);
        let e = wild_terms(&f0, &case1(), 1).unwrap();
        let direct = crate::density::qplus(&f0, &f0, &case1()).unwrap();
        assert!(e.terms[1].total_variation(&direct) < 1e-15);
    }

    #[test]
    fn wild_terms_keep_mean_when_conservative() {
        let f0 = DiscreteDensity::from_pointmass(5, 120).unwrap();
        let e = wild_terms(&f0, &case1(), 12).unwrap();
        for q in &e.terms {
            assert_relative_eq!(q.mean(), 5.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn wild_order_zero() {
        let f0 = DiscreteDensity::from_pointmass(5, 60).unwrap();
        let w = wild_solution(&f0, &case1(), 1.0, 0).unwrap();
        assert_relative_eq!(w.density.prob(5), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(w.residual, 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn wild_small_time_is_initial_state() {
        let f0 = DiscreteDensity::from_pointmass(5, 60).unwrap();
        let w = wild_solution(&f0, &case1(), 1e-8, 3).unwrap();
        assert!(w.density.total_variation(&f0) < 1e-7);
    }

    #[test]
    fn identity_laws_are_stationary() {
        let model = ModelSpec::new(OffspringLaw::point_mass(1), OffspringLaw::point_mass(0));
        let f0 = DiscreteDensity::from_poisson(3.0, 40).unwrap();
        let f = integrate_to(&f0, &model, 2.0, 0.1).unwrap();
        assert!(f.total_variation(&f0) < 1e-14);
    }

    #[test]
    fn partial_final_step() {
        let times = step_schedule(1.0, 0.3).unwrap();
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), 1.0);
        let times = step_schedule(1.0, 0.25).unwrap();
        assert_eq!(times.len(), 5);
        assert!(step_schedule(1.0, 0.0).is_err());
    }

    #[test]
    fn case2_mean_growth() {
        let (x, y) = mutation_case2(0.2, 0.1).unwrap();
        let model = ModelSpec::new(x, y);
        let f0 = DiscreteDensity::from_pointmass(1, 80).unwrap();
        let f = integrate_to(&f0, &model, 2.0, 0.01).unwrap();
        assert_relative_eq!(f.mean(), 0.6f64.exp(), max_relative = 1e-8);
    }

    #[test]
    fn tail_overflow_is_reported() {
        let (x, y) = mutation_case2(1.0, 1.0).unwrap();
        let model = ModelSpec::new(x, y);
        let f0 = DiscreteDensity::from_pointmass(1, 10).unwrap();
        assert!(matches!(
            integrate_to(&f0, &model, 5.0, 0.05),
            Err(BoltzmannError::TailOverflow { .. })
        ));
    }

    #[test]
    fn fixed_point_requires_conservation() {
        let (x, y) = mutation_case2(0.2, 0.1).unwrap();
        let f0 = DiscreteDensity::from_pointmass(1, 20).unwrap();
        assert!(matches!(
            fixed_point(&f0, &ModelSpec::new(x, y), 1e-10, 10),
            Err(BoltzmannError::NotConservative(_))
        ));
    }

    #[test]
    fn poisson_is_fixed_immediately() {
        let model = ModelSpec::new(
            OffspringLaw::bernoulli(0.4).unwrap(),
            OffspringLaw::bernoulli(0.6).unwrap(),
        );
        let f0 = DiscreteDensity::from_poisson(5.0, 100).unwrap();
        let rep = fixed_point(&f0, &model, 1e-12, 5).unwrap();
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn max_iter_exceeded() {
        let f0 = DiscreteDensity::from_pointmass(5, 100).unwrap();
        assert!(matches!(
            fixed_point(&f0, &case1(), 1e-14, 3),
            Err(BoltzmannError::MaxIterExceeded { iterations: 3, .. })
        ));
    }
}
