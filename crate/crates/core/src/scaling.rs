//! Growing-mean regime: scaled profiles and their limit `h_inf`.
//!
//! When `alpha_1 > 0` the solution divided by its mean `m0 e^{alpha_1 t}`
//! converges to the mean-one fixed point of the smoothing transformation
//!
//! ```text
//! V  =d  U^{alpha_1} (E[X] V' + E[Y] V''),   U ~ Uniform(0, 1),
//! ```
//!
//! with `V', V''` independent copies of `V`. Its integer moments follow from
//! a closed recursion, and it can be sampled by population Monte Carlo.

use crate::analytics::drift_region;
use crate::density::{DiscreteDensity, ModelSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("the mean does not grow: alpha_1 = {0}")]
    NotGrowing(f64),
    #[error("(E[X], E[Y]) = ({0}, {1}) lies outside the drift region")]
    OutsideRegion(f64, f64),
    #[error("a population needs at least one particle")]
    EmptyPopulation,
}

fn check_growing(model: &ModelSpec) -> Result<f64, ScalingError> {
    let a1 = model.alpha1();
    if a1 > crate::density::REGIME_TOLERANCE {
        Ok(a1)
    } else {
        Err(ScalingError::NotGrowing(a1))
    }
}

/// Population approximating `h_inf`.
#[derive(Debug, Clone)]
pub struct FixedPointSample {
    pub particles: Vec<f64>,
    pub iteration: usize,
    pub seed: u64,
    /// Empirical second moment after each iteration.
    pub m2_history: Vec<f64>,
}

impl FixedPointSample {
    pub fn mean(&self) -> f64 {
        self.particles.iter().sum::<f64>() / self.particles.len() as f64
    }

    /// Empirical `E[V^k]`.
    pub fn moment(&self, k: i32) -> f64 {
        self.particles.iter().map(|v| v.powi(k)).sum::<f64>() / self.particles.len() as f64
    }

    /// Standard error of the empirical `E[V^k]`.
    pub fn moment_se(&self, k: i32) -> f64 {
        let n = self.particles.len() as f64;
        let m = self.moment(k);
        let var = self
            .particles
            .iter()
            .map(|v| (v.powi(k) - m).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn laplace(&self, xi: f64) -> f64 {
        laplace_of_sample(&self.particles, xi)
    }

    /// CSV with one `value` row per particle.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("particle,value\n");
        for (i, v) in self.particles.iter().enumerate() {
            out.push_str(&format!("{i},{v:.16e}\n"));
        }
        out
    }
}

/// Random stream for particle `idx` at iteration `iter`: the seed selects the
/// key, the iteration the stream and the particle index the block position,
/// so draws do not depend on thread scheduling.
fn particle_rng(seed: u64, iter: usize, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter as u64);
    rng.set_word_pos(idx as u128 * 32);
    rng
}

/// Population iteration of the smoothing transformation, starting from all
/// ones and rescaling the population mean to one after every sweep.
pub fn smoothing_iterate(
    model: &ModelSpec,
    n_particles: usize,
    n_iters: usize,
    seed: u64,
) -> Result<FixedPointSample, ScalingError> {
    let a1 = check_growing(model)?;
    let (ex, ey) = (model.law_x.mean(), model.law_y.mean());
    if !drift_region(ex, ey) {
        return Err(ScalingError::OutsideRegion(ex, ey));
    }
    if n_particles == 0 {
        return Err(ScalingError::EmptyPopulation);
    }
    let mut pop = vec![1.0; n_particles];
    let mut m2_history = Vec::with_capacity(n_iters);
    for iter in 0..n_iters {
        let prev = &pop;
        let mut next: Vec<f64> = (0..n_particles)
            .into_par_iter()
            .map(|idx| {
                let mut rng = particle_rng(seed, iter, idx);
                let u: f64 = rng.random();
                let i = rng.random_range(0..n_particles);
                let j = rng.random_range(0..n_particles);
                u.powf(a1) * (ex * prev[i] + ey * prev[j])
            })
            .collect();
        let mean = next.iter().sum::<f64>() / n_particles as f64;
        next.iter_mut().for_each(|v| *v /= mean);
        m2_history.push(next.iter().map(|v| v * v).sum::<f64>() / n_particles as f64);
        pop = next;
    }
    Ok(FixedPointSample {
        particles: pop,
        iteration: n_iters,
        seed,
        m2_history,
    })
}

/// Integer moment of `h_inf`, `+inf` when the recursion denominator is not
/// positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEntry {
    pub i: usize,
    pub value: f64,
    pub finite: bool,
    /// `alpha_1 i + 1 - E[X]^i - E[Y]^i`.
    pub denominator: f64,
}

/// Moments `m_1 = 1, ..., m_{i_max}` of `h_inf` from
///
/// ```text
/// m_i (alpha_1 i + 1 - E[X]^i - E[Y]^i)
///     = sum_{j=1}^{i-1} C(i, j) E[X]^j E[Y]^{i-j} m_j m_{i-j}.
/// ```
///
/// Once one denominator is non-positive that moment and all higher ones are
/// infinite.
pub fn moment_recursion(model: &ModelSpec, i_max: usize) -> Result<Vec<MomentEntry>, ScalingError> {
    let a1 = check_growing(model)?;
    let (ex, ey) = (model.law_x.mean(), model.law_y.mean());
    let mut m = vec![f64::NAN; i_max + 1];
    let mut out = Vec::with_capacity(i_max);
    let mut diverged = false;
    for i in 1..=i_max {
        let denominator = a1 * i as f64 + 1.0 - ex.powi(i as i32) - ey.powi(i as i32);
        if i == 1 {
            m[1] = 1.0;
        } else if diverged || denominator <= 0.0 {
            diverged = true;
            m[i] = f64::INFINITY;
        } else {
            let mut binom = 1.0;
            let mut sum = 0.0;
            for j in 1..i {
                binom *= (i - j + 1) as f64 / j as f64;
                sum += binom * ex.powi(j as i32) * ey.powi((i - j) as i32) * m[j] * m[i - j];
            }
            m[i] = sum / denominator;
        }
        out.push(MomentEntry {
            i,
            value: m[i],
            finite: m[i].is_finite(),
            denominator,
        });
    }
    Ok(out)
}

/// CSV with columns `i,m_i,finite`.
pub fn moments_csv(entries: &[MomentEntry]) -> String {
    let mut out = String::from("i,m_i,finite\n");
    for e in entries {
        out.push_str(&format!("{},{:.16e},{}\n", e.i, e.value, e.finite));
    }
    out
}

/// Weighted point cloud on the positive half-line.
#[derive(Debug, Clone)]
pub struct ScaledProfile {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ScaledProfile {
    pub fn mean(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn laplace(&self, xi: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (-xi * v).exp())
            .sum()
    }

    /// Standard error of [`Self::laplace`] for an equally weighted sample.
    pub fn laplace_se(&self, xi: f64) -> f64 {
        let n = self.points.len() as f64;
        let l = self.laplace(xi);
        let var = self
            .points
            .iter()
            .map(|v| ((-xi * v).exp() - l).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    }
}

fn scale_factor(model: &ModelSpec, m0: f64, t: f64) -> Result<f64, ScalingError> {
    let a1 = check_growing(model)?;
    Ok(m0 * (a1 * t).exp())
}

/// Agent values divided by `m(t) = m0 e^{alpha_1 t}`, equally weighted.
pub fn scaled_profile(
    values: &[u64],
    model: &ModelSpec,
    m0: f64,
    t: f64,
) -> Result<ScaledProfile, ScalingError> {
    let m = scale_factor(model, m0, t)?;
    let w = 1.0 / values.len() as f64;
    Ok(ScaledProfile {
        points: values.iter().map(|&v| v as f64 / m).collect(),
        weights: vec![w; values.len()],
    })
}

/// A density rescaled the same way (the tail is dropped).
pub fn scaled_density(
    density: &DiscreteDensity,
    model: &ModelSpec,
    m0: f64,
    t: f64,
) -> Result<ScaledProfile, ScalingError> {
    let m = scale_factor(model, m0, t)?;
    Ok(ScaledProfile {
        points: (0..density.probs().len()).map(|v| v as f64 / m).collect(),
        weights: density.probs().to_vec(),
    })
}

/// `(1/n) sum exp(-xi v_i)`.
pub fn laplace_of_sample(sample: &[f64], xi: f64) -> f64 {
    sample.iter().map(|v| (-xi * v).exp()).sum::<f64>() / sample.len() as f64
}
