//! Scenario configuration: a TOML file with one table per concern, dotted
//! `--set` overrides, and conversion into the core model types.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dlc_core::density::{DiscreteDensity, ModelSpec};
use dlc_core::laws::{hgt_case1, mutation_case2, GrazingSpec, OffspringLaw};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Interaction laws, either a named family or explicit `[value, prob]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    HgtCase1 {
        p_l: f64,
        p_d: f64,
        p_h: f64,
    },
    MutationCase2 {
        p: f64,
        q: f64,
    },
    Custom {
        x: Vec<(u32, f64)>,
        y: Vec<(u32, f64)>,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::HgtCase1 {
            p_l: 0.3,
            p_d: 0.1,
            p_h: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Pointmass,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub m0: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Pointmass,
            m0: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Truncation: values `0..=k` are tracked explicitly.
    pub k: usize,
    pub dt: f64,
    pub t_end: f64,
    pub wild_n: usize,
    /// Times at which `metrics` compares solutions.
    pub times: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: 200,
            dt: 0.01,
            t_end: 5.0,
            wild_n: 60,
            times: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub agents: usize,
    /// Required by every stochastic command; there is no clock-based default.
    pub seed: Option<u64>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            agents: 100_000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrazingConfig {
    pub tilde_x: Vec<(u32, f64)>,
    pub tilde_y: Vec<(u32, f64)>,
    pub b1: f64,
    pub b2: f64,
    pub eps_list: Vec<f64>,
    pub times: Vec<f64>,
    pub z_points: usize,
    /// RK4 step along characteristics.
    pub step: f64,
    /// Limit time compared by `sweep`; each kinetic run lasts `sweep_t / epsilon`.
    pub sweep_t: f64,
}

impl Default for GrazingConfig {
    fn default() -> Self {
        Self {
            tilde_x: vec![(0, 0.3), (1, 0.6), (2, 0.1)],
            tilde_y: vec![(0, 0.8), (1, 0.2)],
            b1: 1.0,
            b2: 1.0,
            eps_list: vec![0.2, 0.1, 0.05],
            times: vec![0.5, 1.0, 2.0, 5.0],
            z_points: 101,
            step: 1e-3,
            sweep_t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeaCoulsonConfig {
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub t_end: f64,
    pub replicas: usize,
    pub z: Vec<f64>,
}

impl Default for LeaCoulsonConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            beta1: 0.5,
            beta2: 0.5,
            t_end: 2.0,
            replicas: 100_000,
            z: vec![0.2, 0.5, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub particles: usize,
    pub iterations: usize,
    pub i_max: usize,
    pub r: f64,
    pub merge_times: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            particles: 100_000,
            iterations: 200,
            i_max: 8,
            r: 1.5,
            merge_times: vec![8.0, 16.0, 24.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub n: usize,
    pub h: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { n: 300, h: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub r: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { r: 2.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    pub mc: McConfig,
    pub grazing: GrazingConfig,
    pub leacoulson: LeaCoulsonConfig,
    pub scaling: ScalingConfig,
    pub region: RegionConfig,
    pub metrics: MetricsConfig,
    pub outputs: OutputsConfig,
}

impl ScenarioConfig {
    /// Parses TOML text, applying `key.path=value` overrides first.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        // Deserializing the text itself keeps line and column information in
        // errors about the file; overrides are applied on a second pass.
        let mut cfg: Self = toml::from_str(text).map_err(|e| anyhow!("config: {e}"))?;
        if !overrides.is_empty() {
            let mut table: toml::Table = text.parse().map_err(|e| anyhow!("config: {e}"))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            cfg = toml::Value::Table(table)
                .try_into()
                .map_err(|e| anyhow!("config after overrides {overrides:?}: {e}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    /// Canonical TOML form; parsing it gives back an equal structure.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical form, as lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        self.model_spec()?;
        self.initial_density()?;
        let s = &self.solver;
        if !(s.dt > 0.0) || !(s.t_end >= 0.0) {
            bail!("solver.dt must be positive and solver.t_end non-negative");
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let (x, y) = match &self.model {
            ModelConfig::HgtCase1 { p_l, p_d, p_h } => {
                hgt_case1(*p_l, *p_d, *p_h).context("model")?
            }
            ModelConfig::MutationCase2 { p, q } => mutation_case2(*p, *q).context("model")?,
            ModelConfig::Custom { x, y } => (
                OffspringLaw::new(x).context("model.x")?,
                OffspringLaw::new(y).context("model.y")?,
            ),
        };
        Ok(ModelSpec::new(x, y))
    }

    pub fn initial_density(&self) -> Result<DiscreteDensity> {
        let k = self.solver.k;
        let m0 = self.initial.m0;
        let d = match self.initial.kind {
            InitialKind::Pointmass => {
                if m0 < 0.0 || m0.fract() != 0.0 {
                    bail!("initial.m0 = {m0} must be a non-negative integer for a point mass");
                }
                DiscreteDensity::from_pointmass(m0 as usize, k)
            }
            InitialKind::Poisson => DiscreteDensity::from_poisson(m0, k),
        };
        d.context("initial")
    }

    pub fn grazing_spec(&self, epsilon: f64) -> Result<GrazingSpec> {
        let g = &self.grazing;
        let tx = OffspringLaw::new(&g.tilde_x).context("grazing.tilde_x")?;
        let ty = OffspringLaw::new(&g.tilde_y).context("grazing.tilde_y")?;
        GrazingSpec::new(tx, ty, g.b1, g.b2, self.initial.m0, epsilon).context("grazing")
    }

    pub fn seed(&self, command: &str) -> Result<u64> {
        self.mc.seed.ok_or_else(|| {
            anyhow!(
                "`{command}` is stochastic: set mc.seed in the config or pass --set mc.seed=<n>"
            )
        })
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML literal
/// (number, boolean, array, quoted string) and otherwise taken as a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key.path=value"))?;
    let value = parse_value(raw.trim());
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override `{spec}` has an empty key");
    }
    let (last, parents) = keys.split_last().expect("at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{spec}`: `{k}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::default();
        let again = ScenarioConfig::parse(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn override_values() {
        let cfg = ScenarioConfig::parse(
            "",
            &[
                "solver.dt=0.02".into(),
                "model.family=mutation_case2".into(),
                "model.p=0.2".into(),
                "model.q=0.1".into(),
                "grazing.eps_list=[0.4, 0.2]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.solver.dt, 0.02);
        assert_eq!(cfg.model, ModelConfig::MutationCase2 { p: 0.2, q: 0.1 });
        assert_eq!(cfg.grazing.eps_list, vec![0.4, 0.2]);
    }

    #[test]
    fn unknown_key_names_line_and_key() {
        let err = ScenarioConfig::parse("[solver]\nk = 10\ndtt = 0.1\n", &[]).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("dtt"), "{msg}");
    }

    #[test]
    fn bad_override_syntax() {
        assert!(ScenarioConfig::parse("", &["solver.dt".into()]).is_err());
        assert!(ScenarioConfig::parse("", &["solver..dt=1".into()]).is_err());
    }
}
