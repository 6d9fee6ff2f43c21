//! Layered run configuration.
//!
//! Precedence, lowest to highest: reference defaults, the TOML file,
//! `HIVAGE_<SECTION>_<KEY>` environment variables, then explicit
//! `--set section.key=value` pairs. The resolved configuration
//! serializes back to TOML losslessly, which is what run manifests
//! embed for bit-identical reruns.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hivage_core::optimizer::SweepOptions;
use hivage_core::{AgeGrid, ModelParams};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "HIVAGE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub lambda_in: f64,
    pub mu: f64,
    pub rho0: f64,
    pub beta_hazard: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    pub stage_duration: [f64; 2],
    pub gamma_bar: [f64; 2],
    pub d: [f64; 3],
    pub p_dropout: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub da: f64,
    pub a_max: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSection {
    pub h_max: [f64; 3],
    pub relax: f64,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostsSection {
    #[serde(rename = "cost_B")]
    pub cost_b: f64,
    #[serde(rename = "cost_C")]
    pub cost_c: [f64; 3],
}

/// Fully resolved configuration, serializable both ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub control: ControlSection,
    pub costs: CostsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ModelParams::reference();
        let sweep = SweepOptions::default();
        Self {
            model: ModelSection {
                lambda_in: p.lambda_in,
                mu: p.mu,
                rho0: p.rho0,
                beta_hazard: p.beta_hazard,
                epsilon: p.epsilon,
                delta: p.delta,
                stage_duration: p.stage_duration,
                gamma_bar: p.gamma_bar,
                d: p.d,
                p_dropout: p.p_dropout,
            },
            grid: GridSection {
                da: 0.1,
                a_max: 600.0,
                t_final: 420.0,
            },
            control: ControlSection {
                h_max: p.h_max,
                relax: sweep.relax,
                tol: sweep.tol,
                max_iter: sweep.max_iter,
            },
            costs: CostsSection {
                cost_b: p.cost_b,
                cost_c: p.cost_c,
            },
        }
    }
}

/// Partial mirror used for parsing: every key optional, unknown keys
/// rejected with their name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    #[serde(default)]
    model: PartialModel,
    #[serde(default)]
    grid: PartialGrid,
    #[serde(default)]
    control: PartialControl,
    #[serde(default)]
    costs: PartialCosts,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialModel {
    lambda_in: Option<f64>,
    mu: Option<f64>,
    rho0: Option<f64>,
    beta_hazard: Option<[f64; 3]>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    stage_duration: Option<[f64; 2]>,
    gamma_bar: Option<[f64; 2]>,
    d: Option<[f64; 3]>,
    p_dropout: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialGrid {
    da: Option<f64>,
    a_max: Option<f64>,
    t_final: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialControl {
    h_max: Option<[f64; 3]>,
    relax: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialCosts {
    #[serde(rename = "cost_B")]
    cost_b: Option<f64>,
    #[serde(rename = "cost_C")]
    cost_c: Option<[f64; 3]>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let partial: PartialConfig = toml::from_str(text).context("parsing configuration")?;
        let mut cfg = RunConfig::default();
        let m = partial.model;
        if let Some(v) = m.lambda_in {
            cfg.model.lambda_in = v;
        }
        if let Some(v) = m.mu {
            cfg.model.mu = v;
            // Death-rate defaults track the background exit rate.
            cfg.model.d = [v, v, v + 0.14 / 12000.0];
        }
        if let Some(v) = m.rho0 {
            cfg.model.rho0 = v;
        }
        if let Some(v) = m.beta_hazard {
            cfg.model.beta_hazard = v;
        }
        if m.epsilon.is_some() {
            cfg.model.epsilon = m.epsilon;
        }
        if m.delta.is_some() {
            cfg.model.delta = m.delta;
        }
        if let Some(v) = m.stage_duration {
            cfg.model.stage_duration = v;
        }
        if let Some(v) = m.gamma_bar {
            cfg.model.gamma_bar = v;
        }
        if let Some(v) = m.d {
            cfg.model.d = v;
        }
        if let Some(v) = m.p_dropout {
            cfg.model.p_dropout = v;
        }
        let g = partial.grid;
        if let Some(v) = g.da {
            cfg.grid.da = v;
        }
        if let Some(v) = g.a_max {
            cfg.grid.a_max = v;
        }
        if let Some(v) = g.t_final {
            cfg.grid.t_final = v;
        }
        let c = partial.control;
        if let Some(v) = c.h_max {
            cfg.control.h_max = v;
        }
        if let Some(v) = c.relax {
            cfg.control.relax = v;
        }
        if let Some(v) = c.tol {
            cfg.control.tol = v;
        }
        if let Some(v) = c.max_iter {
            cfg.control.max_iter = v;
        }
        let k = partial.costs;
        if let Some(v) = k.cost_b {
            cfg.costs.cost_b = v;
        }
        if let Some(v) = k.cost_c {
            cfg.costs.cost_c = v;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("resolved configuration serializes")
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, section: &str, key: &str, raw: &str) -> Result<()> {
        let scalar = |raw: &str| -> Result<f64> {
            raw.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("`{raw}` is not a number"))
        };
        fn list<const N: usize>(raw: &str) -> Result<[f64; N]> {
            let trimmed = raw.trim().trim_start_matches('[').trim_end_matches(']');
            let parts: Vec<f64> = trimmed
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| anyhow!("`{raw}` is not a comma-separated number list"))?;
            parts
                .try_into()
                .map_err(|_| anyhow!("`{raw}` must have exactly {N} entries"))
        }
        match (section, key) {
            ("model", "lambda_in") => self.model.lambda_in = scalar(raw)?,
            ("model", "mu") => {
                self.model.mu = scalar(raw)?;
                self.model.d = [self.model.mu, self.model.mu, self.model.mu + 0.14 / 12000.0];
            }
            ("model", "rho0") => self.model.rho0 = scalar(raw)?,
            ("model", "beta_hazard") => self.model.beta_hazard = list(raw)?,
            ("model", "epsilon") => {
                self.model.epsilon = if raw.trim() == "derived" {
                    None
                } else {
                    Some(scalar(raw)?)
                }
            }
            ("model", "delta") => {
                self.model.delta = if raw.trim() == "derived" {
                    None
                } else {
                    Some(scalar(raw)?)
                }
            }
            ("model", "stage_duration") => self.model.stage_duration = list(raw)?,
            ("model", "gamma_bar") => self.model.gamma_bar = list(raw)?,
            ("model", "d") => self.model.d = list(raw)?,
            ("model", "p_dropout") => self.model.p_dropout = list(raw)?,
            ("grid", "da") => self.grid.da = scalar(raw)?,
            ("grid", "a_max") => self.grid.a_max = scalar(raw)?,
            ("grid", "t_final") => self.grid.t_final = scalar(raw)?,
            ("control", "h_max") => self.control.h_max = list(raw)?,
            ("control", "relax") => self.control.relax = scalar(raw)?,
            ("control", "tol") => self.control.tol = scalar(raw)?,
            ("control", "max_iter") => {
                self.control.max_iter = raw
                    .trim()
                    .parse()
                    .map_err(|_| anyhow!("`{raw}` is not an integer"))?
            }
            ("costs", "cost_B") => self.costs.cost_b = scalar(raw)?,
            ("costs", "cost_C") => self.costs.cost_c = list(raw)?,
            _ => bail!("unknown configuration key `{section}.{key}`"),
        }
        Ok(())
    }

    pub fn to_params(&self) -> ModelParams {
        ModelParams {
            lambda_in: self.model.lambda_in,
            mu: self.model.mu,
            rho0: self.model.rho0,
            beta_hazard: self.model.beta_hazard,
            epsilon: self.model.epsilon,
            delta: self.model.delta,
            stage_duration: self.model.stage_duration,
            gamma_bar: self.model.gamma_bar,
            d: self.model.d,
            p_dropout: self.model.p_dropout,
            cost_b: self.costs.cost_b,
            cost_c: self.costs.cost_c,
            h_max: self.control.h_max,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            relax: self.control.relax,
            tol: self.control.tol,
            max_iter: self.control.max_iter,
            ..SweepOptions::default()
        }
    }
}

/// Resolved configuration with validated core objects.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub params: ModelParams,
    pub grid: AgeGrid,
}

/// Loads, overlays environment variables and `--set` pairs, validates.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Loaded> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading configuration {}", p.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };

    let mut env_pairs: Vec<(String, String)> = std::env::vars()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    env_pairs.sort();
    for (key, value) in env_pairs {
        let rest = &key[ENV_PREFIX.len()..];
        let (section, field) = rest
            .split_once('_')
            .ok_or_else(|| anyhow!("malformed override variable {key}"))?;
        let section = section.to_ascii_lowercase();
        // Config keys are lowercase except the cost coefficients.
        let field = match field {
            "COST_B" => "cost_B".to_string(),
            "COST_C" => "cost_C".to_string(),
            other => other.to_ascii_lowercase(),
        };
        config
            .apply_override(&section, &field, &value)
            .with_context(|| format!("applying {key}"))?;
    }

    for pair in sets {
        let (path_part, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got `{pair}`"))?;
        let (section, key) = path_part
            .split_once('.')
            .ok_or_else(|| anyhow!("--set expects section.key=value, got `{pair}`"))?;
        config.apply_override(section.trim(), key.trim(), value)?;
    }

    let params = config.to_params();
    params.validate()?;
    let grid = AgeGrid::new(config.grid.da, config.grid.a_max, config.grid.t_final)?;
    grid.check_covers(&params)?;
    if !(config.control.relax > 0.0 && config.control.relax <= 1.0) {
        bail!("control.relax must lie in (0, 1]");
    }
    if config.control.tol <= 0.0 {
        bail!("control.tol must be positive");
    }
    Ok(Loaded {
        config,
        params,
        grid,
    })
}
