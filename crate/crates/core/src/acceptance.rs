//! Acceptance suite: seventeen end-to-end checks, each comparing one solver
//! against a closed form or against an independent solver.
//!
//! Every check returns a [`CriterionOutcome`] instead of panicking, so the
//! same code backs the `verify` command and the `acceptance` test target.

use std::time::Instant;

use crate::analytics::{self, d_r, d_r_star_values, default_zgrid, logspace};
use crate::boltzmann::{fixed_point, integrate, integrate_to, wild_solution};
use crate::density::{qplus, DiscreteDensity, ModelSpec};
use crate::ensemble::{lea_coulson_replicas, Ensemble, LeaCoulsonSpec};
use crate::grazing::{
    epsilon_sweep, grazing_evolve, grazing_mean, lea_coulson_mean, lea_coulson_pgf,
};
use crate::laws::{hgt_case1, mutation_case2, GrazingSpec, OffspringLaw};
use crate::scaling::{moment_recursion, smoothing_iterate};
use crate::steady::{
    grazing_steady_pgf, hgt_steady_density, hgt_steady_pgf, size_biased_check, HgtParams,
};

/// Result of one acceptance check.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    /// One line of the form `PASS [ 7] title (0.12 s): detail`.
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

type Check = fn() -> Result<(bool, String), String>;

/// `(id, title, check)` for every criterion, in order.
pub const CRITERIA: [(u32, &str, Check); 17] = [
    (
        1,
        "mean conservation, conservative model",
        c01_mean_conservation,
    ),
    (2, "mean growth, mutation model", c02_mean_growth),
    (
        3,
        "stationary variance from the fixed point",
        c03_stationary_variance,
    ),
    (4, "variance relaxation", c04_variance_relaxation),
    (
        5,
        "Poisson fixed point of the gain operator",
        c05_poisson_fixed_point,
    ),
    (6, "negative binomial steady state", c06_negbin_steady),
    (7, "contraction in d_2", c07_contraction),
    (8, "Wild series vs time integration", c08_wild_vs_rk4),
    (9, "Monte Carlo vs deterministic solver", c09_monte_carlo),
    (10, "first-order grazing limit", c10_grazing_order),
    (11, "grazing mean law", c11_grazing_mean),
    (
        12,
        "Lea-Coulson generating function and mean",
        c12_lea_coulson,
    ),
    (13, "drift region deciders", c13_region),
    (
        14,
        "moment recursion and smoothing population",
        c14_moment_recursion,
    ),
    (15, "gamma series identity", c15_series_identity),
    (16, "size-biased steady-state identity", c16_size_biased),
    (
        17,
        "d_r* contraction of grazing limits",
        c17_grazing_contraction,
    ),
];

/// Runs criterion `id` (1-based).
pub fn run(id: u32) -> Option<CriterionOutcome> {
    let &(id, title, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionOutcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA.iter().filter_map(|c| run(c.0)).collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn case1() -> Result<ModelSpec, String> {
    let (x, y) = hgt_case1(0.3, 0.1, 0.2).map_err(err)?;
    Ok(ModelSpec::new(x, y))
}

fn case2() -> Result<ModelSpec, String> {
    let (x, y) = mutation_case2(0.2, 0.1).map_err(err)?;
    Ok(ModelSpec::new(x, y))
}

/// Balanced HGT parameters with `E[X~] = 0.8`, `E[Y~] = 0.2`, `m0 = 5`.
fn balanced_hgt() -> Result<HgtParams, String> {
    HgtParams::new(0.6, 0.1, 0.2, 0.0, 5.0).map_err(err)
}

fn c01_mean_conservation() -> Result<(bool, String), String> {
    let f0 = DiscreteDensity::from_pointmass(5, 200).map_err(err)?;
    let ft = integrate_to(&f0, &case1()?, 5.0, 0.01).map_err(err)?;
    let gap = (ft.mean() - 5.0).abs();
    Ok((gap < 1e-8, format!("|M1(f_5) - 5| = {gap:.3e} (< 1e-8)")))
}

fn c02_mean_growth() -> Result<(bool, String), String> {
    let f0 = DiscreteDensity::from_pointmass(1, 100).map_err(err)?;
    let ft = integrate_to(&f0, &case2()?, 2.0, 0.01).map_err(err)?;
    let target = 0.6f64.exp();
    let rel = (ft.mean() / target - 1.0).abs();
    Ok((
        rel < 1e-6,
        format!(
            "M1(f_2) = {:.12}, e^0.6 = {target:.12}, rel. error {rel:.3e} (< 1e-6)",
            ft.mean()
        ),
    ))
}

fn c03_stationary_variance() -> Result<(bool, String), String> {
    let f0 = DiscreteDensity::from_pointmass(5, 150).map_err(err)?;
    let report = fixed_point(&f0, &case1()?, 1e-13, 2000).map_err(err)?;
    let var = report.density.variance();
    let gap = (var - 8.125).abs();
    Ok((
        gap < 1e-3,
        format!(
            "variance {var:.9} after {} iterations, |gap| {gap:.3e} (< 1e-3)",
            report.iterations
        ),
    ))
}

fn c04_variance_relaxation() -> Result<(bool, String), String> {
    let f0 = DiscreteDensity::from_pointmass(5, 150).map_err(err)?;
    let traj = integrate(&f0, &case1()?, 2.0, 0.01).map_err(err)?;
    let mut worst: f64 = 0.0;
    for t in [0.5f64, 1.0, 2.0] {
        let expected = 8.125 * (1.0 - (-0.32 * t).exp());
        worst = worst.max((traj.state_at(t).variance() - expected).abs());
    }
    Ok((
        worst < 1e-5,
        format!("max |Var(f_t) - 8.125(1 - e^(-0.32 t))| = {worst:.3e} (< 1e-5)"),
    ))
}

fn c05_poisson_fixed_point() -> Result<(bool, String), String> {
    let x = OffspringLaw::bernoulli(0.6).map_err(err)?;
    let y = OffspringLaw::bernoulli(0.4).map_err(err)?;
    let model = ModelSpec::new(x, y);
    let f = DiscreteDensity::from_poisson(5.0, 80).map_err(err)?;
    let out = qplus(&f, &f, &model).map_err(err)?;
    let score = out.total_variation(&f) + out.tail_mass();
    Ok((score < 1e-10, format!("TV + tail = {score:.3e} (< 1e-10)")))
}

fn c06_negbin_steady() -> Result<(bool, String), String> {
    let params = balanced_hgt()?;
    let gspec = params.grazing_spec(1.0, 0.1).map_err(err)?;
    let mut sup: f64 = 0.0;
    for i in 0..=100 {
        let z = i as f64 / 100.0;
        let a = grazing_steady_pgf(&gspec, z).map_err(err)?;
        let b = hgt_steady_pgf(&params, z).map_err(err)?;
        sup = sup.max((a - b).abs());
    }
    let dens = hgt_steady_density(&params, 200).map_err(err)?;
    let (mean, var) = (dens.mean(), dens.variance());
    let disp = var / mean;
    let ok = sup < 1e-8
        && (mean - 5.0).abs() < 1e-9
        && (var - 7.5).abs() < 1e-9
        && (disp - 1.5).abs() < 1e-9;
    Ok((
        ok,
        format!("sup |quadrature - closed form| = {sup:.3e}; mean {mean:.12}, variance {var:.12}, dispersion {disp:.12}"),
    ))
}

fn c07_contraction() -> Result<(bool, String), String> {
    let model = case1()?;
    let a = DiscreteDensity::from_pointmass(5, 150).map_err(err)?;
    let b = DiscreteDensity::from_poisson(5.0, 150).map_err(err)?;
    let ta = integrate(&a, &model, 2.0, 0.01).map_err(err)?;
    let tb = integrate(&b, &model, 2.0, 0.01).map_err(err)?;
    let grid = default_zgrid();
    let d0 = d_r(&a, &b, 2.0, &grid).value;
    let mut worst = 0.0f64;
    for t in [0.5f64, 1.0, 2.0] {
        let dt = d_r(ta.state_at(t), tb.state_at(t), 2.0, &grid).value;
        worst = worst.max(dt / (d0 * (-0.32 * t).exp()));
    }
    Ok((
        worst <= 1.0 + 1e-6,
        format!("d_2(0) = {d0:.6}; max d_2(t) / (d_2(0) e^(-0.32 t)) = {worst:.12} (<= 1 + 1e-6)"),
    ))
}

fn c08_wild_vs_rk4() -> Result<(bool, String), String> {
    let model = case1()?;
    let f0 = DiscreteDensity::from_pointmass(5, 150).map_err(err)?;
    let ode = integrate_to(&f0, &model, 2.0, 1e-3).map_err(err)?;
    let wild = wild_solution(&f0, &model, 2.0, 60).map_err(err)?;
    let tv = wild.density.total_variation(&ode);
    let mass = wild.density.total_mass();
    let renorm = DiscreteDensity::new(
        wild.density.probs().iter().map(|p| p / mass).collect(),
        wild.density.tail_mass() / mass,
    )
    .map_err(err)?;
    let tv_renorm = renorm.total_variation(&ode);
    let tv100 = wild_solution(&f0, &model, 2.0, 100)
        .map_err(err)?
        .density
        .total_variation(&ode);
    Ok((
        tv < 1e-5,
        format!(
            "TV = {tv:.4e} (< 1e-5); truncation residual {:.4e}; renormalized TV {tv_renorm:.3e}; TV with 100 terms {tv100:.3e}",
            wild.residual
        ),
    ))
}

fn c09_monte_carlo() -> Result<(bool, String), String> {
    let model = case1()?;
    let n = 100_000;
    let mut ens = Ensemble::uniform(n, 5, 20_240_601).map_err(err)?;
    ens.simulate(&model, 2.0).map_err(err)?;
    let f0 = DiscreteDensity::from_pointmass(5, 150).map_err(err)?;
    let det = integrate_to(&f0, &model, 2.0, 0.01).map_err(err)?;
    let tv = ens.empirical_density(150).total_variation(&det);
    let se = (ens.variance() / n as f64).sqrt();
    let z = (ens.mean() - 5.0) / se;
    Ok((
        tv <= 0.02 && z.abs() <= 3.0,
        format!(
            "TV = {tv:.4} (<= 0.02); mean {:.5}, z-score {z:.3} (|z| <= 3)",
            ens.mean()
        ),
    ))
}

fn c10_grazing_order() -> Result<(bool, String), String> {
    let params = balanced_hgt()?;
    let gspec = params.grazing_spec(1.0, 0.2).map_err(err)?;
    let f0 = DiscreteDensity::from_pointmass(5, 120).map_err(err)?;
    let zgrid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let rows =
        epsilon_sweep(&gspec, &f0, 1.0, &[0.2, 0.1, 0.05], &zgrid, 0.05, 1e-3).map_err(err)?;
    let ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| w[1].sup_error / w[0].sup_error)
        .collect();
    let ok = ratios.iter().all(|r| (0.3..=0.8).contains(r));
    let errors: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.3e}", r.sup_error))
        .collect();
    let ratios_s: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    Ok((
        ok,
        format!(
            "errors [{}], ratios [{}] (in [0.3, 0.8])",
            errors.join(", "),
            ratios_s.join(", ")
        ),
    ))
}

fn c11_grazing_mean() -> Result<(bool, String), String> {
    let f0 = DiscreteDensity::from_pointmass(5, 60).map_err(err)?;
    let f0hat = move |z: f64| f0.pgf(z);
    let balanced = balanced_hgt()?.grazing_spec(1.0, 0.1).map_err(err)?;
    let (x, y) = mutation_case2(0.2, 0.1).map_err(err)?;
    let growing = GrazingSpec::new(x, y, 1.0, 1.0, 5.0, 0.1).map_err(err)?;
    let mut worst = 0.0f64;
    for spec in [&balanced, &growing] {
        for t in [1.0, 2.0, 5.0] {
            let mean = grazing_mean(spec, &f0hat, t, 1e-3).map_err(err)?;
            let target = 5.0 * (spec.alpha_bar() * t).exp();
            worst = worst.max((mean / target - 1.0).abs());
        }
    }
    Ok((
        worst < 1e-4,
        format!("max relative error of the z -> 1 slope = {worst:.3e} (< 1e-4)"),
    ))
}

fn c12_lea_coulson() -> Result<(bool, String), String> {
    let spec = LeaCoulsonSpec::new(1.0, 0.5, 0.5, 2.0).map_err(err)?;
    let zs = [0.2, 0.5, 0.8];
    let pgf = lea_coulson_pgf(&spec, 2.0, &zs, 1e-3).map_err(err)?;
    let sample = lea_coulson_replicas(&spec, 100_000, 11);
    let n = sample.len() as f64;
    let mut worst_z = 0.0f64;
    for (&z, &g) in zs.iter().zip(&pgf) {
        let vals: Vec<f64> = sample.iter().map(|&k| z.powf(k as f64)).collect();
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        worst_z = worst_z.max((g - m).abs() / (var / n).sqrt());
    }
    let mean = lea_coulson_mean(&spec, 2.0, 1e-3).map_err(err)?;
    let target = 2.0 * std::f64::consts::E;
    let rel = (mean / target - 1.0).abs();
    let formula_rel = (spec.expected_mutants(2.0) / target - 1.0).abs();
    Ok((
        worst_z <= 3.0 && rel < 1e-3 && formula_rel < 1e-3,
        format!("max |z-score| {worst_z:.3} (<= 3); mean {mean:.8} vs 2e, rel. error {rel:.3e} (< 1e-3)"),
    ))
}

fn c13_region() -> Result<(bool, String), String> {
    let inside = analytics::drift_region(1.0, 1.0) && analytics::drift_region(0.9, 0.9);
    let outside = !analytics::drift_region(3.0, 0.1);
    let scan = analytics::region_scan(300, 0.01);
    let decisive: Vec<_> = scan.iter().filter(|p| p.criterion.abs() > 1e-6).collect();
    let disagree = decisive.iter().filter(|p| !p.agree()).count();
    Ok((
        inside && outside && disagree == 0,
        format!(
            "(1,1),(0.9,0.9) inside: {inside}; (3,0.1) outside: {outside}; disagreements {disagree} of {}",
            decisive.len()
        ),
    ))
}

fn c14_moment_recursion() -> Result<(bool, String), String> {
    let unit = ModelSpec::new(OffspringLaw::point_mass(1), OffspringLaw::point_mass(1));
    let m = moment_recursion(&unit, 3).map_err(err)?;
    let exact = m[1].value == 2.0 && m[2].value == 6.0;
    let model = case2()?;
    let rec = moment_recursion(&model, 2).map_err(err)?[1].value;
    let pop = smoothing_iterate(&model, 100_000, 200, 7).map_err(err)?;
    let z = (pop.moment(2) - rec) / pop.moment_se(2);
    Ok((
        exact && z.abs() <= 3.0,
        format!(
            "unit means: m2 = {}, m3 = {}; mutation model m2 = {rec:.6}, population {:.6} (z-score {z:.3})",
            m[1].value,
            m[2].value,
            pop.moment(2)
        ),
    ))
}

fn c15_series_identity() -> Result<(bool, String), String> {
    let sum = analytics::gamma_series(1.3, 1.0, 200);
    let gap = (sum - 0.3f64.exp()).abs();
    Ok((
        gap < 1e-10,
        format!("|partial sum - e^0.3| = {gap:.3e} (< 1e-10)"),
    ))
}

fn c16_size_biased() -> Result<(bool, String), String> {
    let params = balanced_hgt()?;
    let gspec = params.grazing_spec(1.0, 0.1).map_err(err)?;
    let steady = hgt_steady_density(&params, 200).map_err(err)?;
    let r_steady = size_biased_check(&steady, &gspec).map_err(err)?;
    let delta5 = DiscreteDensity::from_pointmass(5, 200).map_err(err)?;
    let r_delta = size_biased_check(&delta5, &gspec).map_err(err)?;
    Ok((
        r_steady < 1e-8 && r_delta > 0.01,
        format!(
            "residual on steady state {r_steady:.3e} (< 1e-8), on point mass {r_delta:.4} (> 0.01)"
        ),
    ))
}

fn c17_grazing_contraction() -> Result<(bool, String), String> {
    let params = balanced_hgt()?;
    let gspec = params.grazing_spec(1.0, 0.1).map_err(err)?;
    let ex = params.tilde_x().map_err(err)?.mean();
    let r = 1.5;
    let xigrid = logspace(1e-3, 30.0, 201);
    let zs: Vec<f64> = xigrid.iter().map(|x| (-x).exp()).collect();
    let a = DiscreteDensity::from_pointmass(5, 200).map_err(err)?;
    let b = DiscreteDensity::from_poisson(5.0, 200).map_err(err)?;
    let times = [0.0, 1.0, 2.0];
    let ga = grazing_evolve(&gspec, &|z| a.pgf(z), &times, &zs, 1e-3).map_err(err)?;
    let gb = grazing_evolve(&gspec, &|z| b.pgf(z), &times, &zs, 1e-3).map_err(err)?;
    let d: Vec<f64> = (0..times.len())
        .map(|i| d_r_star_values(&ga.ghat[i], &gb.ghat[i], r, &xigrid).value)
        .collect();
    let printed_rate = r * (1.0 - ex).powf(r - 1.0);
    let linear_rate = r * (1.0 - ex);
    let mut ok = true;
    let mut ok_linear = true;
    let mut parts = Vec::new();
    for i in 1..times.len() {
        let t = times[i];
        let ratio = d[i] / d[0];
        ok &= ratio <= (-printed_rate * t).exp() + 1e-6;
        ok_linear &= ratio <= (-linear_rate * t).exp() + 1e-6;
        parts.push(format!(
            "t={t}: ratio {ratio:.4} vs bound {:.4}",
            (-printed_rate * t).exp()
        ));
    }
    Ok((
        ok,
        format!(
            "{}; bound at rate r(1 - E[X~]) = {linear_rate:.3} holds: {ok_linear}",
            parts.join(", ")
        ),
    ))
}
