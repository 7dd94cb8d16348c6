//! Offspring laws for the collision rule.
//!
//! An [`OffspringLaw`] is a finite-support probability mass function on the
//! non-negative integers. It plays the role of the law of `X` (offspring kept
//! by the owner of an object) or `Y` (offspring copied into the partner) in
//! the binary interaction
//!
//! ```text
//! V_i' = sum_{k<=V_i} X_ik + sum_{k<=V_j} Y_ik
//! ```
//!
//! The named parametrizations used throughout the crate (duplication/loss/HGT,
//! mutation with migration, and the quasi-invariant `epsilon` family) are built
//! here as well.

use thiserror::Error;

/// Largest number of distinct support points accepted by [`OffspringLaw::new`].
pub const MAX_SUPPORT: usize = 64;

/// Accepted deviation of the input mass from one before renormalizing.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("law has no support points")]
    EmptySupport,
    #[error("negative probability {prob} at value {value}")]
    NegativeProbability { value: u32, prob: f64 },
    #[error("total mass {0} is not within {MASS_TOLERANCE:e} of one")]
    MassNotOne(f64),
    #[error("value {0} appears more than once")]
    DuplicateValue(u32),
    #[error("support has {0} points, at most {MAX_SUPPORT} are allowed")]
    SupportTooLarge(usize),
    #[error("invalid probability parameter {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("{what} = {value} is outside the domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid grazing parameters: {0}")]
    InvalidGrazing(String),
}

/// Finite-support law on the non-negative integers with cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    values: Vec<u32>,
    probs: Vec<f64>,
    /// Dense pmf indexed by value, `0..=max_value`.
    dense: Vec<f64>,
    /// `P(X > m)` for `m = 0..max_value`.
    survival: Vec<f64>,
    /// Raw moments `E[X^k]`, `k = 0..=4`.
    raw: [f64; 5],
}

impl OffspringLaw {
    /// Builds a law from `(value, probability)` pairs.
    ///
    /// Zero-probability entries are dropped, entries are sorted by value and
    /// the mass is renormalized when it is within [`MASS_TOLERANCE`] of one.
    pub fn new(entries: &[(u32, f64)]) -> Result<Self, LawError> {
        if entries.is_empty() {
            return Err(LawError::EmptySupport);
        }
        let mut sorted: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for &(value, prob) in entries {
            if !(prob >= 0.0) || !prob.is_finite() {
                return Err(LawError::NegativeProbability { value, prob });
            }
            sorted.push((value, prob));
        }
        sorted.sort_by_key(|&(v, _)| v);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(LawError::DuplicateValue(w[0].0));
            }
        }
        let mass: f64 = sorted.iter().map(|&(_, p)| p).sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(LawError::MassNotOne(mass));
        }
        sorted.retain(|&(_, p)| p > 0.0);
        if sorted.is_empty() {
            return Err(LawError::EmptySupport);
        }
        if sorted.len() > MAX_SUPPORT {
            return Err(LawError::SupportTooLarge(sorted.len()));
        }

        let values: Vec<u32> = sorted.iter().map(|&(v, _)| v).collect();
        let probs: Vec<f64> = sorted.iter().map(|&(_, p)| p / mass).collect();

        let max_value = *values.last().unwrap() as usize;
        let mut dense = vec![0.0; max_value + 1];
        for (&v, &p) in values.iter().zip(&probs) {
            dense[v as usize] = p;
        }
        // survival[m] = P(X > m), summed from the top so small tails stay exact.
        let mut survival = vec![0.0; max_value];
        let mut acc = 0.0;
        for m in (0..max_value).rev() {
            acc += dense[m + 1];
            survival[m] = acc;
        }
        let mut raw = [0.0; 5];
        for (&v, &p) in values.iter().zip(&probs) {
            let x = v as f64;
            let mut pow = 1.0;
            for r in raw.iter_mut() {
                *r += p * pow;
                pow *= x;
            }
        }
        Ok(Self {
            values,
            probs,
            dense,
            survival,
            raw,
        })
    }

    /// Point mass at `value`.
    pub fn point_mass(value: u32) -> Self {
        Self::new(&[(value, 1.0)]).expect("point mass is a valid law")
    }

    /// Bernoulli law on `{0, 1}` with `P(1) = p`.
    pub fn bernoulli(p: f64) -> Result<Self, LawError> {
        check_prob("p", p)?;
        Self::new(&[(0, 1.0 - p), (1, p)])
    }

    /// Support points with their probabilities, sorted by value.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    /// Dense pmf indexed by value.
    pub fn pmf(&self) -> &[f64] {
        &self.dense
    }

    pub fn prob(&self, value: u32) -> f64 {
        self.dense.get(value as usize).copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> u32 {
        *self.values.last().unwrap()
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.raw[1]
    }

    /// Raw moment `E[X^k]` for `k <= 4`.
    pub fn raw_moment(&self, k: usize) -> f64 {
        self.raw[k]
    }

    pub fn variance(&self) -> f64 {
        (self.raw[2] - self.raw[1] * self.raw[1]).max(0.0)
    }

    /// True for the law `delta_0`, which the model only admits as the `Y` law
    /// of a trivial (identity) interaction.
    pub fn is_zero(&self) -> bool {
        self.values == [0]
    }

    /// Probability generating function `E[z^X]` for `z` in `[0, 1]`.
    pub fn pgf(&self, z: f64) -> Result<f64, LawError> {
        if !(0.0..=1.0).contains(&z) {
            return Err(LawError::Domain {
                what: "z",
                value: z,
                domain: "0 <= z <= 1",
            });
        }
        Ok(self.pgf_unchecked(z))
    }

    /// Horner evaluation of the pgf without the domain check.
    pub fn pgf_unchecked(&self, z: f64) -> f64 {
        if z == 1.0 {
            return 1.0;
        }
        self.dense.iter().rev().fold(0.0, |acc, &p| acc * z + p)
    }

    /// Tail generating function `sum_m z^m P(X > m)`.
    ///
    /// Satisfies `1 - pgf(z) = (1 - z) * tail_pgf(z)` and `tail_pgf(1) = E[X]`,
    /// which gives cancellation-free access to `(1 - pgf(z)) / (1 - z)`.
    pub fn tail_pgf(&self, z: f64) -> f64 {
        self.survival.iter().rev().fold(0.0, |acc, &s| acc * z + s)
    }

    /// Cumulant function `log E[exp(-xi X)]` for `xi > 0`.
    pub fn cumulant(&self, xi: f64) -> Result<f64, LawError> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(LawError::Domain {
                what: "xi",
                value: xi,
                domain: "xi > 0",
            });
        }
        // Factor out the smallest value so the log never sees an underflowed sum.
        let v0 = self.values[0] as f64;
        let shifted: f64 = self
            .support()
            .map(|(v, p)| p * (-xi * (v as f64 - v0)).exp())
            .sum();
        Ok(-xi * v0 + shifted.ln())
    }

    /// Real-order moment `E[X^r]` for `r >= 1`, by direct summation.
    pub fn moment(&self, r: f64) -> Result<f64, LawError> {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(LawError::Domain {
                what: "r",
                value: r,
                domain: "r >= 1",
            });
        }
        Ok(self
            .support()
            .filter(|&(v, _)| v > 0)
            .map(|(v, p)| p * (v as f64).powf(r))
            .sum())
    }
}

fn check_prob(name: &'static str, value: f64) -> Result<(), LawError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(LawError::InvalidProbability { name, value })
    }
}

/// Duplication/loss/horizontal-transfer laws.
///
/// `X = {0: p_l, 1: 1 - p_l - p_d, 2: p_d}` and `Y = {0: 1 - p_h, 1: p_h}`.
/// The mean is conserved iff `p_d + p_h = p_l`.
pub fn hgt_case1(p_l: f64, p_d: f64, p_h: f64) -> Result<(OffspringLaw, OffspringLaw), LawError> {
    check_prob("p_l", p_l)?;
    check_prob("p_d", p_d)?;
    check_prob("p_h", p_h)?;
    if p_l + p_d > 1.0 + 1e-15 {
        return Err(LawError::InvalidProbability {
            name: "p_l + p_d",
            value: p_l + p_d,
        });
    }
    let keep = (1.0 - p_l - p_d).max(0.0);
    let x = OffspringLaw::new(&[(0, p_l), (1, keep), (2, p_d)])?;
    let y = OffspringLaw::bernoulli(p_h)?;
    Ok((x, y))
}

/// Mutation laws: a cell clones itself with probability `p` and, independently,
/// sends a clone to the partner population with probability `q`.
pub fn mutation_case2(p: f64, q: f64) -> Result<(OffspringLaw, OffspringLaw), LawError> {
    check_prob("p", p)?;
    check_prob("q", q)?;
    let x = OffspringLaw::new(&[(1, 1.0 - p), (2, p)])?;
    let y = OffspringLaw::bernoulli(q)?;
    Ok((x, y))
}

/// Which of the two interaction variables to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    X,
    Y,
}

/// Quasi-invariant family `X = eta1 * X~ + (1 - eta1)`, `Y = eta2 * Y~`
/// with `P(eta_i = 1) = b_i * epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrazingSpec {
    tilde_x: OffspringLaw,
    tilde_y: OffspringLaw,
    b1: f64,
    b2: f64,
    m0: f64,
    epsilon: f64,
    alpha_bar: f64,
}

impl GrazingSpec {
    pub fn new(
        tilde_x: OffspringLaw,
        tilde_y: OffspringLaw,
        b1: f64,
        b2: f64,
        m0: f64,
        epsilon: f64,
    ) -> Result<Self, LawError> {
        for (name, v) in [("b1", b1), ("b2", b2), ("m0", m0), ("epsilon", epsilon)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(LawError::InvalidGrazing(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if b1 * epsilon > 1.0 + 1e-15 || b2 * epsilon > 1.0 + 1e-15 {
            return Err(LawError::InvalidGrazing(format!(
                "need b_i * epsilon <= 1, got b1*eps = {}, b2*eps = {}",
                b1 * epsilon,
                b2 * epsilon
            )));
        }
        let alpha_bar = b1 * (tilde_x.mean() - 1.0) + b2 * tilde_y.mean();
        Ok(Self {
            tilde_x,
            tilde_y,
            b1,
            b2,
            m0,
            epsilon,
            alpha_bar,
        })
    }

    /// Same spec with a different `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, LawError> {
        Self::new(
            self.tilde_x.clone(),
            self.tilde_y.clone(),
            self.b1,
            self.b2,
            self.m0,
            epsilon,
        )
    }

    /// Same spec with a different initial mean.
    pub fn with_m0(&self, m0: f64) -> Result<Self, LawError> {
        Self::new(
            self.tilde_x.clone(),
            self.tilde_y.clone(),
            self.b1,
            self.b2,
            m0,
            self.epsilon,
        )
    }

    pub fn tilde_x(&self) -> &OffspringLaw {
        &self.tilde_x
    }
    pub fn tilde_y(&self) -> &OffspringLaw {
        &self.tilde_y
    }
    pub fn b1(&self) -> f64 {
        self.b1
    }
    pub fn b2(&self) -> f64 {
        self.b2
    }
    pub fn m0(&self) -> f64 {
        self.m0
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Growth rate `b1 (E[X~] - 1) + b2 E[Y~]` of the limit mean.
    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    /// Drift `b1 (pgf_X~(z) - z)` multiplying `d/dz g` in the limit equation.
    ///
    /// Evaluated as `b1 (1 - z) (1 - tail_pgf_X~(z))`, which vanishes
    /// exactly at `z = 1`.
    pub fn drift(&self, z: f64) -> f64 {
        self.b1 * (1.0 - z) * (1.0 - self.tilde_x.tail_pgf(z))
    }

    /// `b2 (pgf_Y~(z) - 1)`, the per-unit-mean source rate.
    pub fn source_rate(&self, z: f64) -> f64 {
        -self.b2 * (1.0 - z) * self.tilde_y.tail_pgf(z)
    }
}

/// Law of `X` or `Y` for the quasi-invariant family at `spec.epsilon()`.
///
/// `X` is the mixture `(1 - b1 eps) delta_1 + b1 eps X~` and `Y` is
/// `(1 - b2 eps) delta_0 + b2 eps Y~`.
pub fn graze(spec: &GrazingSpec, which: Which) -> OffspringLaw {
    let (tilde, w, base) = match which {
        Which::X => (&spec.tilde_x, spec.b1 * spec.epsilon, 1u32),
        Which::Y => (&spec.tilde_y, spec.b2 * spec.epsilon, 0u32),
    };
    let w = w.min(1.0);
    let mut dense = vec![0.0; (tilde.max_value().max(base) + 1) as usize];
    dense[base as usize] += 1.0 - w;
    for (v, p) in tilde.support() {
        dense[v as usize] += w * p;
    }
    let entries: Vec<(u32, f64)> = dense
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(v, &p)| (v as u32, p))
        .collect();
    OffspringLaw::new(&entries).expect("mixture of valid laws is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn point_mass_law() {
        let law = OffspringLaw::new(&[(1, 1.0)]).unwrap();
        assert_eq!(law.mean(), 1.0);
        assert_eq!(law.pgf(0.7).unwrap(), 0.7);
        assert_eq!(law.cumulant(1.0).unwrap(), -1.0);
        assert_eq!(law.cumulant(0.5).unwrap(), -0.5);
    }

    #[test]
    fn case1_x_law_moments() {
        let law = OffspringLaw::new(&[(0, 0.3), (1, 0.6), (2, 0.1)]).unwrap();
        assert_relative_eq!(law.mean(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(law.moment(2.0).unwrap(), 1.0, epsilon = 1e-12);
        let y = OffspringLaw::new(&[(0, 0.8), (1, 0.2)]).unwrap();
        assert_relative_eq!(y.moment(1.5).unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_two_point_law() {
        let law = OffspringLaw::new(&[(0, 0.5), (2, 0.5)]).unwrap();
        assert_eq!(law.mean(), 1.0);
        assert_eq!(law.raw_moment(2), 2.0);
        assert_relative_eq!(law.pgf(0.5).unwrap(), 0.625, epsilon = 1e-15);
        let expected = (0.5 + 0.5 * (-2.0f64).exp()).ln();
        assert_relative_eq!(law.cumulant(1.0).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, -0.566219, epsilon = 1e-6);
    }

    #[test]
    fn pgf_is_one_at_one() {
        let law = OffspringLaw::new(&[(0, 0.1), (3, 0.2), (7, 0.7)]).unwrap();
        assert_eq!(law.pgf(1.0).unwrap(), 1.0);
    }

    #[test]
    fn point_mass_moment() {
        assert_eq!(OffspringLaw::point_mass(2).moment(3.0).unwrap(), 8.0);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(OffspringLaw::new(&[]), Err(LawError::EmptySupport));
        assert!(matches!(
            OffspringLaw::new(&[(0, -0.1), (1, 1.1)]),
            Err(LawError::NegativeProbability { .. })
        ));
        assert!(matches!(
            OffspringLaw::new(&[(0, 0.5), (1, 0.4)]),
            Err(LawError::MassNotOne(_))
        ));
        assert!(matches!(
            OffspringLaw::new(&[(1, 0.5), (1, 0.5)]),
            Err(LawError::DuplicateValue(1))
        ));
        let many: Vec<(u32, f64)> = (0..65).map(|v| (v, 1.0 / 65.0)).collect();
        assert!(matches!(
            OffspringLaw::new(&many),
            Err(LawError::SupportTooLarge(65))
        ));
    }

    #[test]
    fn decimal_literals_are_renormalized() {
        let law = OffspringLaw::new(&[(0, 0.3), (1, 0.6), (2, 0.1 + 5e-10)]).unwrap();
        let mass: f64 = law.support().map(|(_, p)| p).sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn domain_errors() {
        let law = OffspringLaw::point_mass(1);
        assert!(law.pgf(1.5).is_err());
        assert!(law.pgf(-0.1).is_err());
        assert!(law.cumulant(0.0).is_err());
        assert!(law.moment(0.5).is_err());
    }

    #[test]
    fn cumulant_slope_recovers_mean() {
        let law = OffspringLaw::new(&[(0, 0.3), (1, 0.6), (2, 0.1)]).unwrap();
        let xi = 1e-7;
        assert_relative_eq!(law.cumulant(xi).unwrap() / -xi, 0.8, epsilon = 1e-6);
    }

    #[test]
    fn graze_examples() {
        let spec = GrazingSpec::new(
            OffspringLaw::point_mass(2),
            OffspringLaw::point_mass(1),
            0.5,
            1.0,
            5.0,
            0.1,
        )
        .unwrap();
        let x = graze(&spec, Which::X);
        assert_relative_eq!(x.prob(1), 0.95, epsilon = 1e-15);
        assert_relative_eq!(x.prob(2), 0.05, epsilon = 1e-15);

        let full = spec.with_epsilon(1.0).unwrap();
        let spec1 = GrazingSpec::new(
            OffspringLaw::point_mass(2),
            OffspringLaw::point_mass(1),
            1.0,
            1.0,
            5.0,
            1.0,
        )
        .unwrap();
        assert_eq!(graze(&spec1, Which::X), OffspringLaw::point_mass(2));
        assert!(full.with_epsilon(2.1).is_err());

        let spec_y = spec.with_epsilon(0.2).unwrap();
        let y = graze(&spec_y, Which::Y);
        assert_relative_eq!(y.prob(0), 0.8, epsilon = 1e-15);
        assert_relative_eq!(y.prob(1), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn grazed_pgf_identities_and_coefficients() {
        let tx = OffspringLaw::new(&[(0, 0.3), (1, 0.6), (2, 0.1)]).unwrap();
        let ty = OffspringLaw::new(&[(0, 0.8), (1, 0.2)]).unwrap();
        let spec = GrazingSpec::new(tx.clone(), ty.clone(), 1.5, 2.0, 5.0, 0.1).unwrap();
        let x = graze(&spec, Which::X);
        let y = graze(&spec, Which::Y);
        for i in 0..=100 {
            let z = i as f64 / 100.0;
            let px = z + 0.15 * (tx.pgf(z).unwrap() - z);
            let py = 1.0 + 0.2 * (ty.pgf(z).unwrap() - 1.0);
            assert!((x.pgf(z).unwrap() - px).abs() < 1e-12);
            assert!((y.pgf(z).unwrap() - py).abs() < 1e-12);
            assert!((spec.drift(z) - 1.5 * (tx.pgf(z).unwrap() - z)).abs() < 1e-14);
            assert!((spec.source_rate(z) - 2.0 * (ty.pgf(z).unwrap() - 1.0)).abs() < 1e-14);
        }
        assert_eq!(spec.drift(1.0), 0.0);
        assert_relative_eq!(
            spec.alpha_bar(),
            1.5 * (0.8 - 1.0) + 2.0 * 0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn grazing_spec_validation() {
        let x = OffspringLaw::point_mass(1);
        let y = OffspringLaw::point_mass(1);
        assert!(GrazingSpec::new(x.clone(), y.clone(), 2.0, 1.0, 1.0, 0.6).is_err());
        assert!(GrazingSpec::new(x.clone(), y.clone(), -1.0, 1.0, 1.0, 0.1).is_err());
        assert!(GrazingSpec::new(x, y, 1.0, 1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn hgt_case1_examples() {
        let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
        assert_relative_eq!(x.mean() + y.mean(), 1.0, epsilon = 1e-12);
        let (x, y) = hgt_case1(0.3, 0.1, 0.1).unwrap();
        assert_relative_eq!(x.mean() + y.mean() - 1.0, -0.1, epsilon = 1e-12);
        let (x, y) = hgt_case1(0.0, 0.0, 0.0).unwrap();
        assert_eq!(x, OffspringLaw::point_mass(1));
        assert!(y.is_zero());
        assert!(hgt_case1(0.7, 0.4, 0.1).is_err());
        assert!(hgt_case1(0.3, 0.1, 1.2).is_err());
    }

    #[test]
    fn mutation_case2_examples() {
        let (x, y) = mutation_case2(0.2, 0.1).unwrap();
        assert_relative_eq!(x.mean(), 1.2, epsilon = 1e-15);
        assert_relative_eq!(y.mean(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(x.mean() + y.mean() - 1.0, 0.3, epsilon = 1e-12);
        let (x, y) = mutation_case2(0.0, 0.0).unwrap();
        assert_eq!(x, OffspringLaw::point_mass(1));
        assert!(y.is_zero());
        let (x, _) = mutation_case2(1.0, 0.0).unwrap();
        assert_eq!(x, OffspringLaw::point_mass(2));
        assert!(mutation_case2(-0.1, 0.0).is_err());
    }
}
