//! Analytic steady states of the quasi-invariant limit.
//!
//! With `phi_X(s) = sum_m s^m P(X~ > m)` (and likewise for `Y~`), a balanced
//! grazing model has the stationary generating function
//!
//! ```text
//! g(z) = exp( -m0 (b2 / b1) int_z^1 phi_Y(s) / (1 - phi_X(s)) ds )
//! ```
//!
//! For laws supported on `{0, 1, 2}` with `b1 = b2` the integral is
//! elementary and yields the Poisson, negative binomial, Poisson-times-
//! negative-binomial and compound Poisson families evaluated here.

use crate::density::{DensityError, DiscreteDensity, TAIL_WARNING};
use crate::laws::{GrazingSpec, LawError, OffspringLaw};
use crate::quadrature::{self, QuadratureError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error("invalid steady-state parameters: {0}")]
    InvalidParams(String),
    #[error("grazing model is not balanced: alpha_bar = {0:e}")]
    NotBalanced(f64),
    #[error("1 - E[X~] = {0} is not positive; the drift has a fixed point below 1")]
    SingularDenominator(f64),
    #[error("density has zero mean")]
    ZeroMean,
    #[error("truncation K = {k} leaves tail mass {tail:e}")]
    TruncationTooSmall { k: usize, tail: f64 },
    #[error("z = {0} is outside [0, 1]")]
    Domain(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Tolerance on `alpha_bar` for a balanced model.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

/// Laws `P{X~ = k} = p_k`, `P{Y~ = k} = q_k` on `{0, 1, 2}` and the initial
/// mean `m0`, for the horizontal-transfer model with equal grazing rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HgtParams {
    pub p: [f64; 3],
    pub q: [f64; 3],
    pub m0: f64,
}

impl HgtParams {
    /// Fills `p0` and `q0` from the other entries and validates.
    pub fn new(p1: f64, p2: f64, q1: f64, q2: f64, m0: f64) -> Result<Self, SteadyError> {
        Self::from_triples([1.0 - p1 - p2, p1, p2], [1.0 - q1 - q2, q1, q2], m0)
    }

    pub fn from_triples(p: [f64; 3], q: [f64; 3], m0: f64) -> Result<Self, SteadyError> {
        let bad = |msg: String| Err(SteadyError::InvalidParams(msg));
        for (name, t) in [("p", p), ("q", q)] {
            if t.iter().any(|&x| !(-1e-15..=1.0 + 1e-15).contains(&x)) {
                return bad(format!("{name} = {t:?} has entries outside [0, 1]"));
            }
            if (t.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return bad(format!("{name} = {t:?} does not sum to one"));
            }
        }
        let balance = p[1] + q[1] + 2.0 * (p[2] + q[2]);
        if (balance - 1.0).abs() > 1e-12 {
            return bad(format!("p1 + q1 + 2 (p2 + q2) = {balance}, must equal 1"));
        }
        if p[2] > 0.0 && p[2] >= p[0] {
            return bad(format!("need p2 < p0, got p2 = {}, p0 = {}", p[2], p[0]));
        }
        if !(m0 > 0.0) || !m0.is_finite() {
            return bad(format!("m0 must be positive, got {m0}"));
        }
        let clamp = |t: [f64; 3]| t.map(|x| x.max(0.0));
        Ok(Self {
            p: clamp(p),
            q: clamp(q),
            m0,
        })
    }

    pub fn tilde_x(&self) -> Result<OffspringLaw, LawError> {
        OffspringLaw::new(&[(0, self.p[0]), (1, self.p[1]), (2, self.p[2])])
    }

    pub fn tilde_y(&self) -> Result<OffspringLaw, LawError> {
        OffspringLaw::new(&[(0, self.q[0]), (1, self.q[1]), (2, self.q[2])])
    }

    /// Grazing spec with `b1 = b2 = b`.
    pub fn grazing_spec(&self, b: f64, epsilon: f64) -> Result<GrazingSpec, LawError> {
        GrazingSpec::new(self.tilde_x()?, self.tilde_y()?, b, b, self.m0, epsilon)
    }

    /// Ratio `p2 / p0` of the negative binomial component.
    fn nb_p(&self) -> f64 {
        self.p[2] / self.p[0]
    }

    /// Exponent of `(1 - p) / (1 - p z)`.
    fn nb_exponent(&self) -> f64 {
        let [p0, _, p2] = self.p;
        let [_, q1, q2] = self.q;
        self.m0 * ((q1 + q2) * p2 + p0 * q2) / (p2 * p2)
    }

    /// Compound-Poisson jump intensities `lambda_k` with
    /// `log g(z) = sum_k lambda_k (z^k - 1)`, for `k = 1..=kmax`.
    fn levy_weights(&self, kmax: usize) -> Vec<f64> {
        let [p0, _, p2] = self.p;
        let [_, q1, q2] = self.q;
        let m0 = self.m0;
        let mut w = vec![0.0; kmax + 1];
        if p2 == 0.0 {
            if kmax >= 1 {
                w[1] = m0 * (q1 + q2) / p0;
            }
            if kmax >= 2 {
                w[2] = m0 * q2 / (2.0 * p0);
            }
        } else {
            let e = self.nb_exponent();
            let p = self.nb_p();
            if kmax >= 1 {
                w[1] = m0 * (q1 + q2) / p0;
            }
            let mut pk = p;
            for (k, wk) in w.iter_mut().enumerate().skip(2) {
                pk *= p;
                *wk = e * pk / k as f64;
            }
        }
        w
    }
}

/// Closed-form stationary generating function.
///
/// * `p2 > 0`: `exp(m0 (q2/p2)(1 - z)) ((1 - p)/(1 - p z))^E` with
///   `p = p2/p0` and `E = m0 ((q1 + q2) p2 + p0 q2) / p2^2`; for `q2 = 0`
///   this is the negative binomial with `r = m0 q1 / p2`.
/// * `p2 = q2 = 0`: Poisson of mean `m0`.
/// * `p2 = 0 < q2`: compound Poisson with rate `m0 (2 q1 + 3 q2) / (2 p0)`
///   and jumps `R = 2` with probability `q2 / (2 q1 + 3 q2)`, else `R = 1`.
pub fn hgt_steady_pgf(params: &HgtParams, z: f64) -> Result<f64, SteadyError> {
    if !(0.0..=1.0).contains(&z) {
        return Err(SteadyError::Domain(z));
    }
    if z == 1.0 {
        return Ok(1.0);
    }
    let [p0, _, p2] = params.p;
    let [_, q1, q2] = params.q;
    let m0 = params.m0;
    let value = if p2 > 0.0 {
        let p = params.nb_p();
        let e = params.nb_exponent();
        (m0 * (q2 / p2) * (1.0 - z) + e * ((1.0 - p) / (1.0 - p * z)).ln()).exp()
    } else if q2 == 0.0 {
        (m0 * (z - 1.0)).exp()
    } else {
        let rate = m0 * (2.0 * q1 + 3.0 * q2) / (2.0 * p0);
        let q2s = q2 / (2.0 * q1 + 3.0 * q2);
        let jump_pgf = (1.0 - q2s) * z + q2s * z * z;
        (rate * (jump_pgf - 1.0)).exp()
    };
    Ok(value)
}

/// Negative binomial pmf `C(k + r - 1, k) (1 - p)^r p^k` for real `r > 0`.
pub fn negative_binomial(r: f64, p: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut term = (r * (-p).ln_1p()).exp();
    out.push(term);
    for j in 1..=k {
        term *= p * (j as f64 - 1.0 + r) / j as f64;
        out.push(term);
    }
    out
}

/// Compound-Poisson pmf from jump intensities by the recursion
/// `n g(n) = sum_k k lambda_k g(n - k)`.
fn compound_poisson(weights: &[f64], log_g0: f64, k: usize) -> Vec<f64> {
    let mut g = vec![0.0; k + 1];
    g[0] = log_g0.exp();
    for n in 1..=k {
        let s: f64 = (1..=n.min(weights.len() - 1))
            .map(|j| j as f64 * weights[j] * g[n - j])
            .sum();
        g[n] = s / n as f64;
    }
    g
}

/// Stationary density on `{0, ..., K}`.
pub fn hgt_steady_density(params: &HgtParams, k: usize) -> Result<DiscreteDensity, SteadyError> {
    let [_, _, p2] = params.p;
    let [_, q1, q2] = params.q;
    let probs = if p2 > 0.0 && q2 == 0.0 {
        negative_binomial(params.m0 * q1 / p2, params.nb_p(), k)
    } else if p2 == 0.0 && q2 == 0.0 {
        DiscreteDensity::from_poisson(params.m0, k)?
            .probs()
            .to_vec()
    } else {
        let weights = params.levy_weights(k);
        compound_poisson(&weights, hgt_steady_pgf(params, 0.0)?.ln(), k)
    };
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    if tail > TAIL_WARNING {
        return Err(SteadyError::TruncationTooSmall { k, tail });
    }
    Ok(DiscreteDensity::new(probs, tail)?)
}

fn check_balanced(gspec: &GrazingSpec) -> Result<(), SteadyError> {
    if gspec.alpha_bar().abs() > BALANCE_TOLERANCE {
        return Err(SteadyError::NotBalanced(gspec.alpha_bar()));
    }
    let gap = 1.0 - gspec.tilde_x().mean();
    if !(gap > 0.0) {
        return Err(SteadyError::SingularDenominator(gap));
    }
    Ok(())
}

/// `R(s) = (b2 / b1) (1 - pgf_Y~(s)) / (pgf_X~(s) - s)`, evaluated as
/// `(b2 / b1) phi_Y(s) / (1 - phi_X(s))` so that `s = 1` needs no limit.
pub fn size_bias_ratio(gspec: &GrazingSpec, s: f64) -> f64 {
    gspec.b2() / gspec.b1() * gspec.tilde_y().tail_pgf(s) / (1.0 - gspec.tilde_x().tail_pgf(s))
}

/// Stationary generating function of a balanced grazing model by quadrature.
pub fn grazing_steady_pgf(gspec: &GrazingSpec, z: f64) -> Result<f64, SteadyError> {
    check_balanced(gspec)?;
    if !(0.0..=1.0).contains(&z) {
        return Err(SteadyError::Domain(z));
    }
    let integral = quadrature::integrate(|s| size_bias_ratio(gspec, s), z, 1.0, 1e-15)?;
    Ok((-gspec.m0() * integral).exp())
}

/// Sup-norm residual on the 101-point grid of `z R(z) g(z) = g*(z)`, where
/// `g*` is the size-biased density. Vanishes at the stationary state.
pub fn size_biased_check(
    density: &DiscreteDensity,
    gspec: &GrazingSpec,
) -> Result<f64, SteadyError> {
    let biased = density.size_biased().ok_or(SteadyError::ZeroMean)?;
    Ok((0..=100)
        .map(|i| {
            let z = i as f64 / 100.0;
            (z * size_bias_ratio(gspec, z) * density.pgf(z) - biased.pgf(z)).abs()
        })
        .fold(0.0, f64::max))
}
