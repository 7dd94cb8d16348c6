//! Mean-field particle Monte Carlo and the Lea–Coulson mutant process.
//!
//! Collisions happen as a Poisson process of rate `N/2`; each event picks an
//! unordered pair uniformly, so every agent takes part at rate one and the
//! empirical law follows the kinetic equation as `N` grows.

use crate::density::{DiscreteDensity, ModelSpec};
use crate::laws::OffspringLaw;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Poisson};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("an ensemble needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("target time {target} is before the current time {current}")]
    TimeReversal { current: f64, target: f64 },
    #[error("invalid Lea-Coulson parameters: {0}")]
    InvalidSpec(String),
}

/// Inverse-CDF sampler for an [`OffspringLaw`].
#[derive(Debug, Clone)]
pub struct LawSampler {
    values: Vec<u64>,
    index: Option<WeightedIndex<f64>>,
}

impl LawSampler {
    pub fn new(law: &OffspringLaw) -> Self {
        let (values, weights): (Vec<u64>, Vec<f64>) =
            law.support().map(|(v, p)| (v as u64, p)).unzip();
        let index = if values.len() > 1 {
            Some(WeightedIndex::new(weights).expect("law weights are valid"))
        } else {
            None
        };
        Self { values, index }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.index {
            Some(idx) => self.values[idx.sample(rng)],
            None => self.values[0],
        }
    }

    /// Sum of `n` independent draws.
    pub fn sum_of<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> u64 {
        match &self.index {
            Some(_) => (0..n).map(|_| self.sample(rng)).sum(),
            None => n * self.values[0],
        }
    }
}

/// Samplers for both laws of a model.
#[derive(Debug, Clone)]
pub struct PairSampler {
    x: LawSampler,
    y: LawSampler,
}

impl PairSampler {
    pub fn new(model: &ModelSpec) -> Self {
        Self {
            x: LawSampler::new(&model.law_x),
            y: LawSampler::new(&model.law_y),
        }
    }

    /// Post-collision values of a pair.
    pub fn collide<R: Rng + ?Sized>(&self, vi: u64, vj: u64, rng: &mut R) -> (u64, u64) {
        let new_i = self.x.sum_of(vi, rng) + self.y.sum_of(vj, rng);
        let new_j = self.x.sum_of(vj, rng) + self.y.sum_of(vi, rng);
        (new_i, new_j)
    }
}

/// One collision `(v_i, v_j) -> (v_i', v_j')` with fresh independent draws.
pub fn collide_pair<R: Rng + ?Sized>(
    vi: u64,
    vj: u64,
    model: &ModelSpec,
    rng: &mut R,
) -> (u64, u64) {
    PairSampler::new(model).collide(vi, vj, rng)
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    values: Vec<u64>,
    time: f64,
    rng: ChaCha8Rng,
}

impl Ensemble {
    pub fn new(values: Vec<u64>, seed: u64) -> Result<Self, EnsembleError> {
        if values.len() < 2 {
            return Err(EnsembleError::TooFewAgents(values.len()));
        }
        Ok(Self {
            values,
            time: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `n` agents all holding `value`.
    pub fn uniform(n: usize, value: u64, seed: u64) -> Result<Self, EnsembleError> {
        Self::new(vec![value; n], seed)
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|&v| (v as f64 - m).powi(2)).sum();
        ss / (self.len() - 1) as f64
    }

    /// Event-driven simulation up to `t_end`.
    pub fn simulate(&mut self, model: &ModelSpec, t_end: f64) -> Result<(), EnsembleError> {
        if t_end < self.time {
            return Err(EnsembleError::TimeReversal {
                current: self.time,
                target: t_end,
            });
        }
        let n = self.values.len();
        let sampler = PairSampler::new(model);
        let clock = Exp::new(n as f64 / 2.0).expect("positive rate");
        loop {
            let wait: f64 = clock.sample(&mut self.rng);
            if self.time + wait > t_end {
                break;
            }
            self.time += wait;
            let i = self.rng.random_range(0..n);
            let mut j = self.rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = sampler.collide(self.values[i], self.values[j], &mut self.rng);
            self.values[i] = a;
            self.values[j] = b;
        }
        // The exponential clock is memoryless, so discarding the overshoot
        // leaves the process exact at t_end.
        self.time = t_end;
        Ok(())
    }

    /// Histogram normalized by `N`, with values beyond `k` in the tail.
    pub fn empirical_density(&self, k: usize) -> DiscreteDensity {
        let mut counts = vec![0u64; k + 1];
        let mut over = 0u64;
        for &v in &self.values {
            match counts.get_mut(v as usize) {
                Some(c) => *c += 1,
                None => over += 1,
            }
        }
        let n = self.len() as f64;
        DiscreteDensity::from_parts(
            counts.iter().map(|&c| c as f64 / n).collect(),
            over as f64 / n,
        )
    }

    /// CSV with one `value` row per agent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Mutation rate `mu`, growth rate `beta1` of normal cells, birth rate
/// `beta2` of mutants and observation time `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaCoulsonSpec {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub t_end: f64,
}

impl LeaCoulsonSpec {
    pub fn new(mu: f64, beta1: f64, beta2: f64, t_end: f64) -> Result<Self, EnsembleError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(EnsembleError::InvalidSpec(format!(
                "mu must be positive, got {mu}"
            )));
        }
        if !(beta2 > 0.0) || !beta2.is_finite() {
            return Err(EnsembleError::InvalidSpec(format!(
                "beta2 must be positive, got {beta2}"
            )));
        }
        if !beta1.is_finite() {
            return Err(EnsembleError::InvalidSpec(format!(
                "beta1 must be finite, got {beta1}"
            )));
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(EnsembleError::InvalidSpec(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        Ok(Self {
            mu,
            beta1,
            beta2,
            t_end,
        })
    }

    /// Rates implied by the kinetic derivation from the mutation laws with
    /// clone probability `p`, transfer probability `q`, grazing rates `b1, b2`
    /// and initial mean `m0`: `beta1 = p b1 + q b2`, `beta2 = p b1`,
    /// `mu = q b2 m0`. In this form the two growth rates are coupled.
    pub fn kinetic(
        p: f64,
        q: f64,
        b1: f64,
        b2: f64,
        m0: f64,
        t_end: f64,
    ) -> Result<Self, EnsembleError> {
        Self::new(q * b2 * m0, p * b1 + q * b2, p * b1, t_end)
    }

    /// Integrated mutation intensity `int_0^t mu e^{beta1 s} ds`.
    pub fn intensity_integral(&self, t: f64) -> f64 {
        if self.beta1 == 0.0 {
            self.mu * t
        } else {
            self.mu * (self.beta1 * t).exp_m1() / self.beta1
        }
    }

    /// `E[W(t)] = mu int_0^t e^{beta1 s + beta2 (t - s)} ds`.
    pub fn expected_mutants(&self, t: f64) -> f64 {
        let d = self.beta1 - self.beta2;
        let tail = if d == 0.0 { t } else { (d * t).exp_m1() / d };
        self.mu * (self.beta2 * t).exp() * tail
    }
}

/// Number of mutants at `spec.t_end` for one realization.
pub fn lea_coulson_sample<R: Rng + ?Sized>(spec: &LeaCoulsonSpec, rng: &mut R) -> u64 {
    let t = spec.t_end;
    let lambda = spec.intensity_integral(t);
    let mutations = if lambda > 0.0 {
        Poisson::new(lambda)
            .expect("positive intensity")
            .sample(rng) as u64
    } else {
        0
    };
    let growth = (spec.beta1 * t).exp_m1();
    let mut total = 0u64;
    for _ in 0..mutations {
        let u: f64 = rng.random();
        let tau = if spec.beta1 == 0.0 {
            u * t
        } else {
            (u * growth).ln_1p() / spec.beta1
        };
        let p = (-spec.beta2 * (t - tau)).exp();
        let extra = Geometric::new(p)
            .expect("probability in (0, 1]")
            .sample(rng);
        total += 1 + extra;
    }
    total
}

/// `n` independent draws, replica `i` using stream `i` of the seed, computed
/// in parallel and returned in replica order.
pub fn lea_coulson_replicas(spec: &LeaCoulsonSpec, n: usize, seed: u64) -> Vec<u64> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            lea_coulson_sample(spec, &mut rng)
        })
        .collect()
}
