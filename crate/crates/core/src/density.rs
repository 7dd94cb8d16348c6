//! Truncated densities on `{0, ..., K}` and the gain operator.
//!
//! A [`DiscreteDensity`] keeps the probabilities of the values `0..=K`
//! together with the mass that fell beyond `K`. That tail is carried through
//! every operation and never folded back, so truncation error stays visible.

use crate::laws::OffspringLaw;
use thiserror::Error;

/// Accepted deviation of `sum(probs) + tail_mass` from one.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Tail mass above which moment accessors are only lower bounds.
pub const TAIL_WARNING: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("truncation K = {k} is too small for value {needed}")]
    TruncationTooSmall { needed: usize, k: usize },
    #[error("densities have different truncations ({0} vs {1})")]
    MismatchedTruncation(usize, usize),
    #[error("total mass {0} is not within {MASS_TOLERANCE:e} of one")]
    MassNotOne(f64),
    #[error("negative or non-finite entry {value} at index {index}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("{what} = {value} is outside the domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl DiscreteDensity {
    /// Builds a density from explicit probabilities and tail, checking the
    /// mass invariant.
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self, DensityError> {
        if probs.is_empty() {
            return Err(DensityError::TruncationTooSmall { needed: 0, k: 0 });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(DensityError::InvalidEntry { index, value });
            }
        }
        if !(tail_mass >= 0.0) || !tail_mass.is_finite() {
            return Err(DensityError::InvalidEntry {
                index: probs.len(),
                value: tail_mass,
            });
        }
        let mass = probs.iter().sum::<f64>() + tail_mass;
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(DensityError::MassNotOne(mass));
        }
        Ok(Self { probs, tail_mass })
    }

    /// Internal constructor for results of exact operations on valid inputs.
    pub(crate) fn from_parts(probs: Vec<f64>, tail_mass: f64) -> Self {
        Self { probs, tail_mass }
    }

    pub fn from_pointmass(m0: usize, k: usize) -> Result<Self, DensityError> {
        if m0 > k {
            return Err(DensityError::TruncationTooSmall { needed: m0, k });
        }
        let mut probs = vec![0.0; k + 1];
        probs[m0] = 1.0;
        Ok(Self {
            probs,
            tail_mass: 0.0,
        })
    }

    /// Poisson law of mean `m0` truncated at `k`.
    pub fn from_poisson(m0: f64, k: usize) -> Result<Self, DensityError> {
        if !(m0 > 0.0) || !m0.is_finite() {
            return Err(DensityError::Domain {
                what: "m0",
                value: m0,
                domain: "m0 > 0",
            });
        }
        let ln_m0 = m0.ln();
        let mut probs = Vec::with_capacity(k + 1);
        // log p(v) = -m0 + v ln m0 - ln v!, accumulated term by term.
        let mut log_p = -m0;
        for v in 0..=k {
            if v > 0 {
                log_p += ln_m0 - (v as f64).ln();
            }
            probs.push(log_p.exp());
        }
        let tail_mass = poisson_upper_tail(m0, k, &probs);
        Ok(Self { probs, tail_mass })
    }

    /// Truncation bound `K`.
    pub fn k(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, v: usize) -> f64 {
        self.probs.get(v).copied().unwrap_or(0.0)
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `sum(probs) + tail_mass`.
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    /// True when moments computed from `probs` are only lower bounds.
    pub fn tail_warning(&self) -> bool {
        self.tail_mass > TAIL_WARNING
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(v, &p)| v as f64 * p)
            .sum()
    }

    /// Second moment about the mean, computed with a two-pass sum.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(v, &p)| {
                let d = v as f64 - m;
                d * d * p
            })
            .sum()
    }

    /// `M_r = sum v^r f(v)` for real `r > 0`.
    pub fn moment(&self, r: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(v, &p)| (v as f64).powf(r) * p)
            .sum()
    }

    /// Second factorial moment `sum v (v - 1) f(v)`.
    pub fn factorial_moment2(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(v, &p)| (v as f64) * (v as f64 - 1.0) * p)
            .sum()
    }

    /// Generating function of the retained part, `sum_{v<=K} f(v) z^v`.
    pub fn pgf(&self, z: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, &p| acc * z + p)
    }

    /// Laplace transform of the retained part, `sum_{v<=K} f(v) exp(-xi v)`.
    pub fn laplace(&self, xi: f64) -> f64 {
        self.pgf((-xi).exp())
    }

    /// `1/2 (sum |f - g| + |tail_f - tail_g|)`. Different truncations are
    /// compared by padding with zeros.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        let body: f64 = (0..n).map(|v| (self.prob(v) - other.prob(v)).abs()).sum();
        0.5 * (body + (self.tail_mass - other.tail_mass).abs())
    }

    /// `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self, DensityError> {
        self.check_same_k(other)?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        Ok(Self {
            probs,
            tail_mass: w * self.tail_mass + (1.0 - w) * other.tail_mass,
        })
    }

    /// Size-biased density `v f(v) / M_1(f)`.
    pub fn size_biased(&self) -> Option<Self> {
        let m = self.mean();
        if !(m > 0.0) {
            return None;
        }
        let probs = self
            .probs
            .iter()
            .enumerate()
            .map(|(v, &p)| v as f64 * p / m)
            .collect();
        Some(Self {
            probs,
            tail_mass: 0.0,
        })
    }

    pub(crate) fn check_same_k(&self, other: &Self) -> Result<(), DensityError> {
        if self.k() != other.k() {
            Err(DensityError::MismatchedTruncation(self.k(), other.k()))
        } else {
            Ok(())
        }
    }

    /// CSV with columns `v,prob` and a final `tail,<mass>` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,prob\n");
        for (v, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{v},{p:.16e}\n"));
        }
        out.push_str(&format!("tail,{:.16e}\n", self.tail_mass));
        out
    }
}

fn poisson_upper_tail(m0: f64, k: usize, probs: &[f64]) -> f64 {
    let body: f64 = probs.iter().sum();
    let direct = 1.0 - body;
    // When the remainder is tiny, sum the first omitted terms instead so the
    // tail keeps relative precision.
    if direct > 1e-6 {
        return direct.max(0.0);
    }
    let mut term = probs[k];
    let mut tail = 0.0;
    let mut v = k;
    loop {
        v += 1;
        term *= m0 / v as f64;
        tail += term;
        if term < tail * 1e-17 || term == 0.0 {
            break;
        }
    }
    tail
}

/// Truncation bound `mean + 10 sd`, rounded up.
pub fn suggest_truncation(mean: f64, sd: f64) -> usize {
    (mean + 10.0 * sd).ceil().max(1.0) as usize
}

/// Convolution `a * b` truncated at `k`. Returns the retained part and the
/// mass that landed beyond `k` (computed from suffix sums, not `1 - sum`).
fn convolve_truncated(a: &[f64], b: &[f64], k: usize) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; k + 1];
    for (i, &ai) in a.iter().enumerate().take(k + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(k + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    // suffix[j] = sum_{l >= j} b_l
    let mut suffix = vec![0.0; b.len() + 1];
    for j in (0..b.len()).rev() {
        suffix[j] = suffix[j + 1] + b[j];
    }
    let overflow = a
        .iter()
        .enumerate()
        .map(|(i, &ai)| {
            let start = (k + 1).saturating_sub(i);
            if start < suffix.len() {
                ai * suffix[start]
            } else {
                0.0
            }
        })
        .sum();
    (out, overflow)
}

/// Law of `sum_{k=1}^{V} X_k` with `V ~ base` and `X_k` iid from `law`.
pub fn compound(base: &DiscreteDensity, law: &OffspringLaw, k: usize) -> DiscreteDensity {
    let pmf = law.pmf();
    let mut result = vec![0.0; k + 1];
    let mut tail = base.tail_mass;
    // c holds the law of a sum of v summands, c_tail its overflow.
    let mut c = vec![0.0; k + 1];
    c[0] = 1.0;
    let mut c_tail = 0.0;
    for (v, &weight) in base.probs.iter().enumerate() {
        if v > 0 {
            let (next, spill) = convolve_truncated(&c, pmf, k);
            c = next;
            c_tail += spill;
        }
        if weight != 0.0 {
            for (r, &cv) in result.iter_mut().zip(&c) {
                *r += weight * cv;
            }
            tail += weight * c_tail;
        }
    }
    DiscreteDensity::from_parts(result, tail)
}

/// Regime of the mean dynamics, decided by the sign of `alpha_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    ConservedMean,
    GrowingMean,
    ShrinkingMean,
}

/// Tolerance on `alpha_1` for calling the mean conserved.
pub const REGIME_TOLERANCE: f64 = 1e-12;

/// The pair of offspring laws driving the collision rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub law_x: OffspringLaw,
    pub law_y: OffspringLaw,
}

impl ModelSpec {
    pub fn new(law_x: OffspringLaw, law_y: OffspringLaw) -> Self {
        Self { law_x, law_y }
    }

    /// `Delta_r = E[X]^r + E[Y]^r`.
    pub fn delta(&self, r: f64) -> f64 {
        self.law_x.mean().powf(r) + self.law_y.mean().powf(r)
    }

    /// `alpha_r = Delta_r - 1`.
    pub fn alpha(&self, r: f64) -> f64 {
        self.delta(r) - 1.0
    }

    /// `alpha_1`, the exponential rate of the mean.
    pub fn alpha1(&self) -> f64 {
        self.law_x.mean() + self.law_y.mean() - 1.0
    }

    pub fn regime(&self) -> Regime {
        let a = self.alpha1();
        if a.abs() <= REGIME_TOLERANCE {
            Regime::ConservedMean
        } else if a > 0.0 {
            Regime::GrowingMean
        } else {
            Regime::ShrinkingMean
        }
    }
}

/// Gain operator: law of `sum_{i<=V1} Y_i + sum_{i<=V2} X_i` with
/// `V1 ~ f` and `V2 ~ g`.
pub fn qplus(
    f: &DiscreteDensity,
    g: &DiscreteDensity,
    model: &ModelSpec,
) -> Result<DiscreteDensity, DensityError> {
    f.check_same_k(g)?;
    let k = f.k();
    let a = compound(f, &model.law_y, k);
    let b = compound(g, &model.law_x, k);
    Ok(convolve_densities(&a, &b))
}

/// Convolution of two densities sharing `K`, with exact tail accounting.
pub(crate) fn convolve_densities(a: &DiscreteDensity, b: &DiscreteDensity) -> DiscreteDensity {
    let k = a.k();
    let (probs, overflow) = convolve_truncated(&a.probs, &b.probs, k);
    let sum_a: f64 = a.probs.iter().sum();
    let mass_b = b.probs.iter().sum::<f64>() + b.tail_mass;
    let tail = a.tail_mass * mass_b + sum_a * b.tail_mass + overflow;
    DiscreteDensity::from_parts(probs, tail)
}

/// Compounding as a matrix: row `v` holds the law of a sum of `v` summands
/// together with its overflow, restricted to its non-zero index range.
#[derive(Debug, Clone)]
struct CompoundTable {
    rows: Vec<(usize, Vec<f64>)>,
    tails: Vec<f64>,
    k: usize,
}

impl CompoundTable {
    fn new(law: &OffspringLaw, k: usize) -> Self {
        let pmf = law.pmf();
        let mut rows = Vec::with_capacity(k + 1);
        let mut tails = Vec::with_capacity(k + 1);
        let mut c = vec![0.0; k + 1];
        c[0] = 1.0;
        let mut c_tail = 0.0;
        for v in 0..=k {
            if v > 0 {
                let (next, spill) = convolve_truncated(&c, pmf, k);
                c = next;
                c_tail += spill;
            }
            let lo = c.iter().position(|&x| x != 0.0).unwrap_or(k + 1);
            let hi = c.iter().rposition(|&x| x != 0.0).map_or(lo, |h| h + 1);
            rows.push((lo, c[lo.min(k + 1)..hi.max(lo)].to_vec()));
            tails.push(c_tail);
        }
        Self { rows, tails, k }
    }

    fn apply(&self, base: &DiscreteDensity) -> DiscreteDensity {
        let mut out = vec![0.0; self.k + 1];
        let mut tail = base.tail_mass;
        for (v, &w) in base.probs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (lo, row) = &self.rows[v];
            for (o, &c) in out[*lo..*lo + row.len()].iter_mut().zip(row) {
                *o += w * c;
            }
            tail += w * self.tails[v];
        }
        DiscreteDensity::from_parts(out, tail)
    }
}

/// Precomputed gain operator for a fixed model and truncation.
///
/// Repeated applications cost one matrix-vector product per compound plus
/// one convolution, which is what the time integrators and the Wild
/// recursion need.
#[derive(Debug, Clone)]
pub struct CollisionKernel {
    model: ModelSpec,
    by_x: CompoundTable,
    by_y: CompoundTable,
}

impl CollisionKernel {
    pub fn new(model: &ModelSpec, k: usize) -> Self {
        Self {
            model: model.clone(),
            by_x: CompoundTable::new(&model.law_x, k),
            by_y: CompoundTable::new(&model.law_y, k),
        }
    }

    pub fn k(&self) -> usize {
        self.by_x.k
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn check(&self, d: &DiscreteDensity) -> Result<(), DensityError> {
        if d.k() != self.k() {
            Err(DensityError::MismatchedTruncation(d.k(), self.k()))
        } else {
            Ok(())
        }
    }

    /// `compound(f, X)`.
    pub fn compound_x(&self, f: &DiscreteDensity) -> Result<DiscreteDensity, DensityError> {
        self.check(f)?;
        Ok(self.by_x.apply(f))
    }

    /// `compound(f, Y)`.
    pub fn compound_y(&self, f: &DiscreteDensity) -> Result<DiscreteDensity, DensityError> {
        self.check(f)?;
        Ok(self.by_y.apply(f))
    }

    /// Same result as [`qplus`].
    pub fn qplus(
        &self,
        f: &DiscreteDensity,
        g: &DiscreteDensity,
    ) -> Result<DiscreteDensity, DensityError> {
        let a = self.compound_y(f)?;
        let b = self.compound_x(g)?;
        Ok(convolve_densities(&a, &b))
    }

    /// Gain term from already compounded inputs `compound(f, Y)` and
    /// `compound(g, X)`.
    pub fn qplus_from_compounds(a: &DiscreteDensity, b: &DiscreteDensity) -> DiscreteDensity {
        convolve_densities(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{hgt_case1, OffspringLaw};
    use approx::assert_relative_eq;

    fn law(e: &[(u32, f64)]) -> OffspringLaw {
        OffspringLaw::new(e).unwrap()
    }

    #[test]
    fn pointmass_examples() {
        let d = DiscreteDensity::from_pointmass(5, 100).unwrap();
        assert_eq!(d.prob(5), 1.0);
        assert_eq!(d.tail_mass(), 0.0);
        assert_eq!(d.mean(), 5.0);
        let d0 = DiscreteDensity::from_pointmass(0, 10).unwrap();
        assert_eq!(d0.prob(0), 1.0);
        assert_eq!(
            DiscreteDensity::from_pointmass(100, 50),
            Err(DensityError::TruncationTooSmall { needed: 100, k: 50 })
        );
    }

    #[test]
    fn poisson_examples() {
        let d = DiscreteDensity::from_poisson(5.0, 100).unwrap();
        assert!(d.tail_mass() < 1e-15);
        assert_relative_eq!(d.mean(), 5.0, epsilon = 1e-12);
        assert_relative_eq!(d.variance(), 5.0, epsilon = 1e-12);

        let d = DiscreteDensity::from_poisson(1.0, 0).unwrap();
        assert_relative_eq!(d.prob(0), (-1.0f64).exp(), epsilon = 1e-16);
        assert_relative_eq!(d.tail_mass(), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);

        let d = DiscreteDensity::from_poisson(3.0, 12).unwrap();
        for z in [0.0f64, 0.3, 0.9, 1.0] {
            let exact = (3.0 * (z - 1.0)).exp();
            assert!((d.pgf(z) - exact).abs() <= d.tail_mass() + 1e-15);
        }
        assert!(DiscreteDensity::from_poisson(0.0, 10).is_err());
    }

    #[test]
    fn compound_examples() {
        let d = DiscreteDensity::from_pointmass(2, 10).unwrap();
        let c = compound(&d, &OffspringLaw::point_mass(3), 10);
        assert_eq!(c.prob(6), 1.0);

        let base = DiscreteDensity::new(vec![0.5, 0.5, 0.0], 0.0).unwrap();
        let c = compound(&base, &law(&[(0, 0.5), (1, 0.5)]), 2);
        assert_relative_eq!(c.prob(0), 0.75, epsilon = 1e-15);
        assert_relative_eq!(c.prob(1), 0.25, epsilon = 1e-15);

        let base = DiscreteDensity::from_poisson(6.0, 80).unwrap();
        let c = compound(&base, &law(&[(0, 0.7), (1, 0.3)]), 80);
        let thin = DiscreteDensity::from_poisson(1.8, 80).unwrap();
        assert!(c.total_variation(&thin) < 1e-13);
    }

    #[test]
    fn compound_overflow_goes_to_tail() {
        let d = DiscreteDensity::from_pointmass(4, 6).unwrap();
        let c = compound(&d, &OffspringLaw::point_mass(2), 6);
        assert_eq!(c.tail_mass(), 1.0);
        assert_eq!(c.probs().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn qplus_identity_interaction() {
        let model = ModelSpec::new(OffspringLaw::point_mass(1), OffspringLaw::point_mass(0));
        let f = DiscreteDensity::from_poisson(2.0, 30).unwrap();
        let g = DiscreteDensity::from_pointmass(7, 30).unwrap();
        let q = qplus(&f, &g, &model).unwrap();
        assert_eq!(q.probs(), g.probs());
        // The tail of f cannot be placed, so it stays in the tail.
        assert!(q.total_variation(&g) <= f.tail_mass());
    }

    #[test]
    fn qplus_case1_second_moment() {
        let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
        let model = ModelSpec::new(x, y);
        let f = DiscreteDensity::from_pointmass(1, 10).unwrap();
        let q = qplus(&f, &f, &model).unwrap();
        // E[(X + Y)^2] = E[X^2] + 2 E[X] E[Y] + E[Y^2] = 1.0 + 0.32 + 0.2
        assert_relative_eq!(q.moment(2.0), 1.52, epsilon = 1e-14);
    }

    #[test]
    fn qplus_mismatched_truncation() {
        let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
        let model = ModelSpec::new(x, y);
        let f = DiscreteDensity::from_pointmass(1, 10).unwrap();
        let g = DiscreteDensity::from_pointmass(1, 11).unwrap();
        assert_eq!(
            qplus(&f, &g, &model),
            Err(DensityError::MismatchedTruncation(10, 11))
        );
    }

    #[test]
    fn kernel_matches_direct_qplus() {
        let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
        let model = ModelSpec::new(x, y);
        let kernel = CollisionKernel::new(&model, 40);
        let f = DiscreteDensity::from_poisson(4.0, 40).unwrap();
        let g = DiscreteDensity::from_pointmass(9, 40).unwrap();
        let a = qplus(&f, &g, &model).unwrap();
        let b = kernel.qplus(&f, &g).unwrap();
        assert!(a.total_variation(&b) < 1e-15);
    }

    #[test]
    fn model_constants() {
        let (x, y) = hgt_case1(0.3, 0.1, 0.2).unwrap();
        let m = ModelSpec::new(x, y);
        assert_eq!(m.regime(), Regime::ConservedMean);
        assert_relative_eq!(m.alpha(2.0), -0.32, epsilon = 1e-12);
        let (x, y) = hgt_case1(0.3, 0.1, 0.1).unwrap();
        assert_eq!(ModelSpec::new(x, y).regime(), Regime::ShrinkingMean);
    }

    #[test]
    fn csv_layout() {
        let d = DiscreteDensity::from_pointmass(1, 2).unwrap();
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "v,prob");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("tail,"));
    }
}
