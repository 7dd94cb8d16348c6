//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use dlc_core::acceptance;
use dlc_core::analytics::{
    d_r, d_r_star, d_r_star_values, default_xigrid, default_zgrid, logspace, mean_at, region_csv,
    region_scan, variance_at,
};
use dlc_core::boltzmann::{integrate, integrate_to, wild_solution};
use dlc_core::density::{DiscreteDensity, Regime};
use dlc_core::ensemble::{lea_coulson_replicas, Ensemble, LeaCoulsonSpec};
use dlc_core::grazing::{epsilon_sweep, grazing_evolve, lea_coulson_mean, lea_coulson_pgf};
use dlc_core::scaling::{moment_recursion, moments_csv, scaled_profile, smoothing_iterate};
use dlc_core::steady::{
    grazing_steady_pgf, hgt_steady_density, hgt_steady_pgf, size_biased_check, HgtParams,
};
use serde_json::{json, Value};

use crate::config::{InitialKind, ScenarioConfig};

/// Output directory used when neither the flag, the config nor
/// `DLC_OUTPUT_DIR` names one.
pub const DEFAULT_OUTPUT_DIR: &str = "dlc-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// RK4 time integration of the kinetic equation.
    Evolve,
    /// Truncated Wild series, compared with RK4.
    Wild,
    /// Mean-field particle Monte Carlo.
    Mc,
    /// Closed-form steady state of the grazing limit.
    Steady,
    /// Grazing-limit generating function along characteristics.
    Grazing,
    /// Kinetic solutions against the grazing limit for shrinking epsilon.
    Sweep,
    /// Lea-Coulson generating function, mean and Monte Carlo replicas.
    Leacoulson,
    /// Moments and particle sample of the self-similar profile.
    Scaling,
    /// Scan of the drift region.
    Region,
    /// Distances between two solutions over time.
    Metrics,
    /// The acceptance suite.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Wild => "wild",
            Command::Mc => "mc",
            Command::Steady => "steady",
            Command::Grazing => "grazing",
            Command::Sweep => "sweep",
            Command::Leacoulson => "leacoulson",
            Command::Scaling => "scaling",
            Command::Region => "region",
            Command::Metrics => "metrics",
            Command::Verify => "verify",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Command::Mc | Command::Leacoulson | Command::Scaling)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: ScenarioConfig,
    /// Highest-priority output directory (the `--output-dir` flag).
    pub output_dir: Option<PathBuf>,
    /// Criteria run by `verify`; empty means all.
    pub criteria: Vec<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Lines for the terminal.
    pub messages: Vec<String>,
    pub success: bool,
}

/// Flag, then `outputs.directory`, then `DLC_OUTPUT_DIR`, then the default.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &ScenarioConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.outputs.directory.as_ref().map(PathBuf::from))
        .or_else(|| {
            std::env::var_os("DLC_OUTPUT_DIR")
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Writes files for one run, each stamped with the config hash and seed.
struct Sink {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    seed: Option<u64>,
    report: RunReport,
}

impl Sink {
    fn new(
        dir: PathBuf,
        command: Command,
        cfg: &ScenarioConfig,
        seed: Option<u64>,
    ) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            command: command.name(),
            hash: cfg.hash(),
            seed,
            report: RunReport {
                success: true,
                ..RunReport::default()
            },
        })
    }

    fn header(&self) -> String {
        let seed = self
            .seed
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# dlc {} config_sha256={} seed={}\n",
            self.command, self.hash, seed
        )
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.report
            .messages
            .push(format!("wrote {}", path.display()));
        self.report.files.push(path);
        Ok(())
    }

    /// CSV with a leading `#` comment line.
    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = self.header() + body;
        self.write(name, &text)
    }

    /// JSON object; JSON has no comments, so the stamp goes into fields.
    fn json(&mut self, name: &str, mut value: Value) -> Result<()> {
        let obj = value.as_object_mut().expect("summaries are objects");
        obj.insert("command".into(), json!(self.command));
        obj.insert("config_sha256".into(), json!(self.hash));
        obj.insert("seed".into(), json!(self.seed));
        let text = serde_json::to_string_pretty(&value)? + "\n";
        self.write(name, &text)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Runs one subcommand. Errors cover invalid input and solver failures;
/// a failed acceptance criterion is reported through `success` instead.
pub fn run(command: Command, opts: &RunOptions) -> Result<RunReport> {
    let cfg = &opts.config;
    if command == Command::Verify {
        return verify(&opts.criteria);
    }
    let seed = if command.is_stochastic() {
        Some(cfg.seed(command.name())?)
    } else {
        cfg.mc.seed
    };
    let dir = resolve_output_dir(opts.output_dir.as_deref(), cfg);
    let mut sink = Sink::new(dir, command, cfg, seed)?;
    sink.write("config.toml", &(sink.header() + &cfg.to_toml()))?;
    let seed = seed.unwrap_or_default();
    match command {
        Command::Evolve => evolve(cfg, &mut sink),
        Command::Wild => wild(cfg, &mut sink),
        Command::Mc => mc(cfg, seed, &mut sink),
        Command::Steady => steady(cfg, &mut sink),
        Command::Grazing => grazing(cfg, &mut sink),
        Command::Sweep => sweep(cfg, &mut sink),
        Command::Leacoulson => leacoulson(cfg, seed, &mut sink),
        Command::Scaling => scaling(cfg, seed, &mut sink),
        Command::Region => region(cfg, &mut sink),
        Command::Metrics => metrics(cfg, &mut sink),
        Command::Verify => unreachable!("handled above"),
    }
    .with_context(|| format!("`{}` failed", command.name()))?;
    Ok(sink.report)
}

fn verify(criteria: &[u32]) -> Result<RunReport> {
    let ids: Vec<u32> = if criteria.is_empty() {
        acceptance::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        criteria.to_vec()
    };
    let mut report = RunReport {
        success: true,
        ..RunReport::default()
    };
    for id in ids {
        let outcome = acceptance::run(id).ok_or_else(|| anyhow!("no acceptance criterion {id}"))?;
        // Printed as soon as each check finishes; the full suite takes minutes.
        println!("{}", outcome.line());
        report.success &= outcome.passed;
    }
    let failed = !report.success;
    report.messages.push(if failed {
        "acceptance: at least one criterion failed".into()
    } else {
        "acceptance: all criteria passed".into()
    });
    Ok(report)
}

fn evolve(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let model = cfg.model_spec()?;
    let f0 = cfg.initial_density()?;
    let t_end = cfg.solver.t_end;
    let traj = integrate(&f0, &model, t_end, cfg.solver.dt)?;
    let last = traj.last();
    sink.csv("trajectory.csv", &traj.to_csv())?;
    sink.csv("density.csv", &last.to_csv())?;
    sink.json(
        "evolve_summary.json",
        json!({
            "time": t_end,
            "mean": last.mean(),
            "variance": last.variance(),
            "tail_mass": last.tail_mass(),
            "analytic_mean": mean_at(f0.mean(), &model, t_end),
            "analytic_variance": variance_at(f0.variance(), f0.mean(), &model, t_end),
            "alpha_1": model.alpha1(),
            "regime": format!("{:?}", model.regime()),
        }),
    )
}

fn wild(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let model = cfg.model_spec()?;
    let f0 = cfg.initial_density()?;
    let (t, n) = (cfg.solver.t_end, cfg.solver.wild_n);
    let sol = wild_solution(&f0, &model, t, n)?;
    let ode = integrate_to(&f0, &model, t, cfg.solver.dt)?;
    sink.csv("wild.csv", &sol.density.to_csv())?;
    sink.json(
        "wild_summary.json",
        json!({
            "time": t,
            "order": n,
            "residual": sol.residual,
            "represented_mass": sol.density.total_mass(),
            "tv_vs_rk4": sol.density.total_variation(&ode),
            "mean": sol.density.mean(),
        }),
    )
}

/// `n` agent values following `density` by stratified quantiles
/// (agent `i` takes the `(i + 1/2) / n` quantile). Mass beyond `K` maps to
/// `K + 1`.
pub fn quantile_values(density: &DiscreteDensity, n: usize) -> Vec<u64> {
    let probs = density.probs();
    let mut out = Vec::with_capacity(n);
    let mut v = 0usize;
    let mut cdf = probs.first().copied().unwrap_or(0.0);
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        while cdf < u && v < probs.len() {
            v += 1;
            cdf += probs.get(v).copied().unwrap_or(0.0);
        }
        out.push(v as u64);
    }
    out
}

fn mc(cfg: &ScenarioConfig, seed: u64, sink: &mut Sink) -> Result<()> {
    let model = cfg.model_spec()?;
    let f0 = cfg.initial_density()?;
    let t_end = cfg.solver.t_end;
    let mut ens = Ensemble::new(quantile_values(&f0, cfg.mc.agents), seed)?;
    ens.simulate(&model, t_end)?;
    sink.csv("ensemble.csv", &ens.to_csv())?;
    sink.json(
        "summary.json",
        json!({
            "time": ens.time(),
            "agents": ens.len(),
            "mean": ens.mean(),
            "variance": ens.variance(),
            "analytic_mean": mean_at(f0.mean(), &model, t_end),
        }),
    )
}

/// Steady-state parameters from the grazing section. The closed form needs
/// laws on `{0, 1, 2}` and equal rates `b1 = b2`.
fn hgt_params(cfg: &ScenarioConfig) -> Result<(HgtParams, f64)> {
    let g = &cfg.grazing;
    if g.b1 != g.b2 {
        bail!(
            "the closed-form steady state needs grazing.b1 == grazing.b2 (got {} and {})",
            g.b1,
            g.b2
        );
    }
    let spec = cfg.grazing_spec(1.0 / g.b1.max(1.0))?;
    let (tx, ty) = (spec.tilde_x(), spec.tilde_y());
    if tx.max_value() > 2 || ty.max_value() > 2 {
        bail!("the closed-form steady state needs grazing laws supported on {{0, 1, 2}}");
    }
    let triple = |l: &dlc_core::laws::OffspringLaw| [l.prob(0), l.prob(1), l.prob(2)];
    let params = HgtParams::from_triples(triple(tx), triple(ty), cfg.initial.m0)?;
    Ok((params, g.b1))
}

fn steady(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let (params, b) = hgt_params(cfg)?;
    let gspec = params.grazing_spec(b, 1.0 / b.max(1.0))?;
    let density = hgt_steady_density(&params, cfg.solver.k)?;
    let grid = uniform_grid(101);
    let mut quad_vs_closed = 0.0f64;
    let mut density_vs_closed = 0.0f64;
    for &z in &grid {
        let closed = hgt_steady_pgf(&params, z)?;
        quad_vs_closed = quad_vs_closed.max((grazing_steady_pgf(&gspec, z)? - closed).abs());
        density_vs_closed = density_vs_closed.max((density.pgf(z) - closed).abs());
    }
    let size_biased = size_biased_check(&density, &gspec)?;
    let (mean, variance) = (density.mean(), density.variance());
    sink.csv("steady.csv", &density.to_csv())?;
    sink.json(
        "steady_check.json",
        json!({
            "m0": params.m0,
            "mean": mean,
            "variance": variance,
            "dispersion_index": variance / mean,
            "tail_mass": density.tail_mass(),
            "residuals": {
                "quadrature_vs_closed_form": quad_vs_closed,
                "density_vs_closed_form": density_vs_closed,
                "size_biased_identity": size_biased,
            },
        }),
    )
}

fn grazing(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let g = &cfg.grazing;
    let gspec = cfg.grazing_spec(1.0 / g.b1.max(g.b2).max(1.0))?;
    let f0 = cfg.initial_density()?;
    let f0hat = |z: f64| f0.pgf(z);
    let sol = grazing_evolve(&gspec, &f0hat, &g.times, &uniform_grid(g.z_points), g.step)?;
    sink.csv("grazing.csv", &sol.to_csv())
}

fn sweep(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let g = &cfg.grazing;
    let first = *g
        .eps_list
        .first()
        .ok_or_else(|| anyhow!("grazing.eps_list is empty"))?;
    let gspec = cfg.grazing_spec(first)?;
    let f0 = cfg.initial_density()?;
    let rows = epsilon_sweep(
        &gspec,
        &f0,
        g.sweep_t,
        &g.eps_list,
        &uniform_grid(g.z_points),
        cfg.solver.dt,
        g.step,
    )?;
    let mut body = String::from("epsilon,sup_error\n");
    for r in &rows {
        body.push_str(&format!("{},{}\n", fmt(r.epsilon), fmt(r.sup_error)));
    }
    sink.csv("sweep.csv", &body)
}

fn leacoulson(cfg: &ScenarioConfig, seed: u64, sink: &mut Sink) -> Result<()> {
    let lc = &cfg.leacoulson;
    let spec = LeaCoulsonSpec::new(lc.mu, lc.beta1, lc.beta2, lc.t_end)?;
    let step = cfg.grazing.step;
    let pgf = lea_coulson_pgf(&spec, lc.t_end, &lc.z, step)?;
    let sample = lea_coulson_replicas(&spec, lc.replicas, seed);
    let n = sample.len() as f64;
    let mut body = String::from("z,ghat,ghat_mc,se_mc\n");
    for (&z, &g) in lc.z.iter().zip(&pgf) {
        let vals: Vec<f64> = sample.iter().map(|&k| z.powf(k as f64)).collect();
        let m = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        body.push_str(&format!(
            "{},{},{},{}\n",
            fmt(z),
            fmt(g),
            fmt(m),
            fmt((var / n).sqrt())
        ));
    }
    sink.csv("leacoulson.csv", &body)?;
    let mc_mean = sample.iter().map(|&k| k as f64).sum::<f64>() / n;
    sink.json(
        "leacoulson_summary.json",
        json!({
            "time": lc.t_end,
            "replicas": sample.len(),
            "mean_from_pgf": lea_coulson_mean(&spec, lc.t_end, step)?,
            "mean_formula": spec.expected_mutants(lc.t_end),
            "mean_mc": mc_mean,
        }),
    )
}

fn scaling(cfg: &ScenarioConfig, seed: u64, sink: &mut Sink) -> Result<()> {
    let model = cfg.model_spec()?;
    let sc = &cfg.scaling;
    let moments = moment_recursion(&model, sc.i_max)?;
    sink.csv("moments.csv", &moments_csv(&moments))?;
    let fixed = smoothing_iterate(&model, sc.particles, sc.iterations, seed)?;
    sink.csv("fixedpoint.csv", &fixed.to_csv())?;

    let xigrid = logspace(1e-2, 10.0, 101);
    let target: Vec<f64> = xigrid.iter().map(|&xi| fixed.laplace(xi)).collect();
    let f0 = cfg.initial_density()?;
    // The ensemble gets its own stream so it does not reuse the particle draws.
    let mut ens = Ensemble::new(quantile_values(&f0, cfg.mc.agents), seed.wrapping_add(1))?;
    let mut body = String::from("t,d_r_star\n");
    let mut rows = Vec::new();
    for &t in &sc.merge_times {
        ens.simulate(&model, t)?;
        let profile = scaled_profile(ens.values(), &model, f0.mean(), t)?;
        let lap: Vec<f64> = xigrid.iter().map(|&xi| profile.laplace(xi)).collect();
        let d = d_r_star_values(&lap, &target, sc.r, &xigrid).value;
        body.push_str(&format!("{},{}\n", fmt(t), fmt(d)));
        let mean = profile.mean();
        let m2 = profile.points.iter().map(|v| v * v).sum::<f64>() / profile.points.len() as f64;
        // The finite ensemble carries a random factor in its mean that never
        // decays; dividing it out leaves the shape alone.
        let shape: Vec<f64> = xigrid
            .iter()
            .map(|&xi| profile.laplace(xi / mean))
            .collect();
        let d_shape = d_r_star_values(&shape, &target, sc.r, &xigrid).value;
        rows.push(json!({
            "t": t,
            "d_r_star": d,
            "d_r_star_mean_normalized": d_shape,
            "scaled_mean": mean,
            "scaled_m2": m2,
        }));
    }
    sink.csv("merge.csv", &body)?;
    sink.json(
        "scaling_summary.json",
        json!({
            "alpha_1": model.alpha1(),
            "r": sc.r,
            "fixed_point_mean": fixed.mean(),
            "fixed_point_m2": fixed.moment(2),
            "merge": rows,
        }),
    )
}

fn region(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let scan = region_scan(cfg.region.n, cfg.region.h);
    sink.csv("region.csv", &region_csv(&scan))
}

/// The configured initial density and a second one with the same `m0`:
/// a Poisson law for a point mass, a point mass at `round(m0)` otherwise.
fn metric_pair(cfg: &ScenarioConfig) -> Result<(DiscreteDensity, DiscreteDensity)> {
    let f0 = cfg.initial_density()?;
    let k = cfg.solver.k;
    let g0 = match cfg.initial.kind {
        InitialKind::Pointmass => DiscreteDensity::from_poisson(cfg.initial.m0, k)?,
        InitialKind::Poisson => {
            DiscreteDensity::from_pointmass(cfg.initial.m0.round() as usize, k)?
        }
    };
    Ok((f0, g0))
}

fn metrics(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    let model = cfg.model_spec()?;
    let r = cfg.metrics.r;
    let (f0, g0) = metric_pair(cfg)?;
    let times = &cfg.solver.times;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let (zgrid, xigrid) = (default_zgrid(), default_xigrid());
    let (tf, tg) = if t_max > 0.0 {
        (
            Some(integrate(&f0, &model, t_max, cfg.solver.dt)?),
            Some(integrate(&g0, &model, t_max, cfg.solver.dt)?),
        )
    } else {
        (None, None)
    };
    let d0 = d_r(&f0, &g0, r, &zgrid).value;
    let delta = model.delta(r);
    let conservative = model.regime() == Regime::ConservedMean;
    let mut body = String::from("t,d_r,d_r_star,contraction_bound\n");
    let mut rows = Vec::new();
    let mut push = |t: f64, f: &DiscreteDensity, g: &DiscreteDensity| {
        let a = d_r(f, g, r, &zgrid).value;
        let b = d_r_star(f, g, r, &xigrid).value;
        let bound = d0 * (-(1.0 - delta) * t).exp();
        body.push_str(&format!(
            "{},{},{},{}\n",
            fmt(t),
            fmt(a),
            fmt(b),
            fmt(bound)
        ));
        rows.push(json!({ "t": t, "d_r": a, "d_r_star": b, "contraction_bound": bound }));
    };
    push(0.0, &f0, &g0);
    if let (Some(tf), Some(tg)) = (&tf, &tg) {
        for &t in times.iter().filter(|&&t| t > 0.0) {
            push(t, tf.state_at(t), tg.state_at(t));
        }
    }
    sink.csv("metrics.csv", &body)?;
    sink.json(
        "summary.json",
        json!({
            "r": r,
            "delta_r": delta,
            "alpha_r": model.alpha(r),
            "contraction_rate": 1.0 - delta,
            "bound_applies": conservative,
            "rows": rows,
        }),
    )
}
