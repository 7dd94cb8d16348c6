//! The quasi-invariant limit: a linear transport equation for the
//! generating function,
//!
//! ```text
//! d/dt g(t, z) = b(z) d/dz g(t, z) + c(t, z) g(t, z),
//! ```
//!
//! solved exactly along characteristics. For a grazing model
//! `b(z) = b1 (pgf_X~(z) - z)` and `c(t, z) = b2 m0 e^{alpha_bar t}
//! (pgf_Y~(z) - 1)`; the Lea–Coulson mutant process is the special case
//! `b(z) = beta2 z (z - 1)`, `c(t, z) = mu e^{beta1 t} (z - 1)`.

use crate::boltzmann::{self, BoltzmannError};
use crate::density::{DiscreteDensity, ModelSpec};
use crate::ensemble::LeaCoulsonSpec;
use crate::laws::{graze, GrazingSpec, LawError, Which};
use rayon::prelude::*;
use thiserror::Error;

/// Allowed excursion of a characteristic outside `[0, 1]` before aborting.
pub const ESCAPE_TOLERANCE: f64 = 1e-9;

/// Largest `t / epsilon` accepted by [`epsilon_sweep`].
pub const MAX_KINETIC_TIME: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrazingError {
    #[error("characteristic from z = {z} left [0, 1] (reached {reached})")]
    CharacteristicEscape { z: f64, reached: f64 },
    #[error("z = {0} is outside [0, 1]")]
    Domain(f64),
    #[error("invalid time or step: t = {t}, step = {step}")]
    InvalidTime { t: f64, step: f64 },
    #[error("epsilon = {epsilon} needs kinetic time {kinetic_time} > {MAX_KINETIC_TIME}")]
    EpsilonTooSmall { epsilon: f64, kinetic_time: f64 },
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Boltzmann(#[from] BoltzmannError),
}

/// Coefficients of a linear first-order transport equation in `z`.
pub trait Transport: Sync {
    /// `b(z)`, the coefficient of `d/dz g`.
    fn drift(&self, z: f64) -> f64;
    /// `c(t, z)`, the coefficient of `g`.
    fn source(&self, t: f64, z: f64) -> f64;
}

impl Transport for GrazingSpec {
    fn drift(&self, z: f64) -> f64 {
        GrazingSpec::drift(self, z)
    }

    fn source(&self, t: f64, z: f64) -> f64 {
        self.m0() * (self.alpha_bar() * t).exp() * self.source_rate(z)
    }
}

/// Lea–Coulson coefficients.
#[derive(Debug, Clone, Copy)]
pub struct LeaCoulsonTransport(pub LeaCoulsonSpec);

impl Transport for LeaCoulsonTransport {
    fn drift(&self, z: f64) -> f64 {
        self.0.beta2 * z * (z - 1.0)
    }

    fn source(&self, t: f64, z: f64) -> f64 {
        self.0.mu * (self.0.beta1 * t).exp() * (z - 1.0)
    }
}

/// Foot `zeta` at time 0 of the characteristic through `(t, z)` and the
/// accumulated exponent `int_0^t c(s, zeta(s)) ds`.
///
/// Runs RK4 in reverse time `tau = t - s` on `zeta' = b(zeta)`,
/// `I' = c(t - tau, zeta)`.
pub fn trace_characteristic<T: Transport + ?Sized>(
    coeffs: &T,
    t: f64,
    z: f64,
    step: f64,
) -> Result<(f64, f64), GrazingError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(GrazingError::Domain(z));
    }
    if !(t >= 0.0) || !(step > 0.0) || !t.is_finite() {
        return Err(GrazingError::InvalidTime { t, step });
    }
    let n = (t / step - 1e-9).ceil().max(0.0) as usize;
    let f = |tau: f64, zeta: f64| (coeffs.drift(zeta), coeffs.source(t - tau, zeta));
    let clamp = |zeta: f64| -> Result<f64, GrazingError> {
        if !(-ESCAPE_TOLERANCE..=1.0 + ESCAPE_TOLERANCE).contains(&zeta) {
            Err(GrazingError::CharacteristicEscape { z, reached: zeta })
        } else {
            Ok(zeta.clamp(0.0, 1.0))
        }
    };
    let mut zeta = z;
    let mut expo = 0.0;
    let mut tau = 0.0;
    for i in 0..n {
        let tau_next = if i + 1 == n { t } else { (i + 1) as f64 * step };
        let h = tau_next - tau;
        let (b1, c1) = f(tau, zeta);
        let (b2, c2) = f(tau + 0.5 * h, clamp(zeta + 0.5 * h * b1)?);
        let (b3, c3) = f(tau + 0.5 * h, clamp(zeta + 0.5 * h * b2)?);
        let (b4, c4) = f(tau_next, clamp(zeta + h * b3)?);
        zeta = clamp(zeta + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4))?;
        expo += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
        tau = tau_next;
    }
    Ok((zeta, expo))
}

/// `g(t, z)` for initial generating function `f0hat`.
pub fn solve_at<T: Transport + ?Sized>(
    coeffs: &T,
    f0hat: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    z: f64,
    step: f64,
) -> Result<f64, GrazingError> {
    let (zeta, expo) = trace_characteristic(coeffs, t, z, step)?;
    Ok(f0hat(zeta) * expo.exp())
}

/// `g(t, .)` on a grid of times and points.
#[derive(Debug, Clone)]
pub struct CharacteristicSolution {
    pub zgrid: Vec<f64>,
    pub times: Vec<f64>,
    /// `ghat[i][j] = g(times[i], zgrid[j])`.
    pub ghat: Vec<Vec<f64>>,
}

impl CharacteristicSolution {
    /// CSV with columns `t,z,ghat`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,z,ghat\n");
        for (t, row) in self.times.iter().zip(&self.ghat) {
            for (z, g) in self.zgrid.iter().zip(row) {
                out.push_str(&format!("{t:.16e},{z:.16e},{g:.16e}\n"));
            }
        }
        out
    }
}

/// Solves the transport equation on `times x zgrid`. Every characteristic is
/// independent, so the grid is evaluated in parallel.
pub fn evolve<T: Transport + ?Sized>(
    coeffs: &T,
    f0hat: &(dyn Fn(f64) -> f64 + Sync),
    times: &[f64],
    zgrid: &[f64],
    step: f64,
) -> Result<CharacteristicSolution, GrazingError> {
    let ghat = times
        .iter()
        .map(|&t| {
            zgrid
                .par_iter()
                .map(|&z| solve_at(coeffs, f0hat, t, z, step))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CharacteristicSolution {
        zgrid: zgrid.to_vec(),
        times: times.to_vec(),
        ghat,
    })
}

/// Grazing limit of a [`GrazingSpec`] (its `epsilon` is ignored).
pub fn grazing_evolve(
    gspec: &GrazingSpec,
    f0hat: &(dyn Fn(f64) -> f64 + Sync),
    times: &[f64],
    zgrid: &[f64],
    step: f64,
) -> Result<CharacteristicSolution, GrazingError> {
    evolve(gspec, f0hat, times, zgrid, step)
}

/// Default spacing of the one-sided difference in [`mean_from_pgf`].
pub const FD_STEP: f64 = 1e-5;

/// `g'(1)` by the second-order one-sided difference
/// `(3 g(1) - 4 g(1 - h) + g(1 - 2h)) / (2h)`.
pub fn mean_from_pgf<E>(g: impl Fn(f64) -> Result<f64, E>, h: f64) -> Result<f64, E> {
    Ok((3.0 * g(1.0)? - 4.0 * g(1.0 - h)? + g(1.0 - 2.0 * h)?) / (2.0 * h))
}

/// Mean of the grazing solution at time `t`, read off the generating function.
pub fn grazing_mean(
    gspec: &GrazingSpec,
    f0hat: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    step: f64,
) -> Result<f64, GrazingError> {
    mean_from_pgf(|z| solve_at(gspec, f0hat, t, z, step), FD_STEP)
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub sup_error: f64,
}

/// For each `epsilon`, integrates the kinetic equation with the grazed laws
/// up to `t / epsilon` and compares its generating function with the limit
/// `g(t, .)` on `zgrid`. The limit uses `m0 = M_1(f0)`.
pub fn epsilon_sweep(
    gspec: &GrazingSpec,
    f0: &DiscreteDensity,
    t: f64,
    eps_list: &[f64],
    zgrid: &[f64],
    dt: f64,
    step: f64,
) -> Result<Vec<SweepRow>, GrazingError> {
    let limit_spec = gspec.with_m0(f0.mean())?;
    let f0hat = |z: f64| f0.pgf(z);
    let limit = evolve(&limit_spec, &f0hat, &[t], zgrid, step)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &epsilon in eps_list {
        let kinetic_time = t / epsilon;
        if !(kinetic_time <= MAX_KINETIC_TIME) {
            return Err(GrazingError::EpsilonTooSmall {
                epsilon,
                kinetic_time,
            });
        }
        let spec = gspec.with_epsilon(epsilon)?;
        let model = ModelSpec::new(graze(&spec, Which::X), graze(&spec, Which::Y));
        let f = boltzmann::integrate_to(f0, &model, kinetic_time, dt)?;
        let sup_error = zgrid
            .iter()
            .zip(&limit.ghat[0])
            .map(|(&z, &g)| (f.pgf(z) - g).abs())
            .fold(0.0, f64::max);
        rows.push(SweepRow { epsilon, sup_error });
    }
    Ok(rows)
}

/// Generating function of the Lea–Coulson mutant count at time `t`, started
/// from no mutants.
pub fn lea_coulson_pgf(
    spec: &LeaCoulsonSpec,
    t: f64,
    zgrid: &[f64],
    step: f64,
) -> Result<Vec<f64>, GrazingError> {
    lea_coulson_pgf_from(spec, &|_| 1.0, t, zgrid, step)
}

/// As [`lea_coulson_pgf`] with an explicit initial generating function.
pub fn lea_coulson_pgf_from(
    spec: &LeaCoulsonSpec,
    f0hat: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    zgrid: &[f64],
    step: f64,
) -> Result<Vec<f64>, GrazingError> {
    let sol = evolve(&LeaCoulsonTransport(*spec), f0hat, &[t], zgrid, step)?;
    Ok(sol.ghat.into_iter().next().unwrap())
}

/// Mean mutant count at `t` read off the generating function.
pub fn lea_coulson_mean(spec: &LeaCoulsonSpec, t: f64, step: f64) -> Result<f64, GrazingError> {
    let coeffs = LeaCoulsonTransport(*spec);
    mean_from_pgf(|z| solve_at(&coeffs, &|_| 1.0, t, z, step), FD_STEP)
}
