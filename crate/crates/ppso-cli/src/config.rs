//! Configuration resolution: defaults, then the flat key-value file, then
//! command-line overrides, validated before any computation starts.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ppso::model::PolicyParams;
use ppso::montecarlo::McSpec;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable providing the default output directory.
pub const OUT_DIR_ENV: &str = "PPSO_OUT";

/// Fully resolved run configuration; embedded verbatim in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub params: PolicyParams,
    pub n_steps: usize,
    /// Grid truncation override; `None` selects the automatic level.
    pub x_max: Option<f64>,
    pub mc: McSpec,
    pub output_dir: PathBuf,
    /// Parameter sweeps for the sensitivity command: `(name, values)`.
    pub sweep: Option<Vec<(String, Vec<f64>)>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            params: PolicyParams::default(),
            n_steps: 2000,
            x_max: None,
            mc: McSpec::default(),
            output_dir: std::env::var(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|_| PathBuf::from("out")),
            sweep: None,
        }
    }
}

/// Flat key-value config file (TOML syntax). Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    t: Option<f64>,
    r: Option<f64>,
    sigma: Option<f64>,
    r_g: Option<f64>,
    delta: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    alpha: Option<f64>,
    a0: Option<f64>,
    fee_p: Option<f64>,
    fee_q: Option<f64>,
    n_steps: Option<usize>,
    x_max: Option<f64>,
    n_paths: Option<u64>,
    steps_per_year: Option<u32>,
    seed: Option<u64>,
    bridge_correction: Option<bool>,
    output_dir: Option<String>,
    /// Sweep spec, e.g. `"alpha=0.2,0.5; gamma=0.15,0.4"`.
    sweep: Option<String>,
}

/// Which Monte Carlo knobs the config file set explicitly; the flow-check
/// command substitutes its own defaults for the untouched ones.
#[derive(Debug, Default, Clone, Copy)]
pub struct LoadedKeys {
    pub n_paths: bool,
    pub steps_per_year: bool,
}

impl RunConfig {
    pub fn load_file(&mut self, path: &Path) -> Result<LoadedKeys> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| anyhow!("config file {}: {e}", path.display()))?;
        let loaded = LoadedKeys {
            n_paths: file.n_paths.is_some(),
            steps_per_year: file.steps_per_year.is_some(),
        };
        let p = &mut self.params;
        set_if(&mut p.maturity_t, file.t);
        set_if(&mut p.risk_free_r, file.r);
        set_if(&mut p.sigma, file.sigma);
        set_if(&mut p.guaranteed_rg, file.r_g);
        set_if(&mut p.delta, file.delta);
        set_if(&mut p.beta, file.beta);
        set_if(&mut p.gamma, file.gamma);
        set_if(&mut p.alpha, file.alpha);
        set_if(&mut p.a0, file.a0);
        set_if(&mut p.fee_p, file.fee_p);
        set_if(&mut p.fee_q, file.fee_q);
        set_if(&mut self.n_steps, file.n_steps);
        if file.x_max.is_some() {
            self.x_max = file.x_max;
        }
        set_if(&mut self.mc.n_paths, file.n_paths);
        set_if(&mut self.mc.steps_per_year, file.steps_per_year);
        set_if(&mut self.mc.seed, file.seed);
        set_if(&mut self.mc.bridge_correction, file.bridge_correction);
        if let Some(dir) = file.output_dir {
            self.output_dir = PathBuf::from(dir);
        }
        if let Some(sweep) = file.sweep {
            self.sweep = Some(parse_sweep_list(&sweep)?);
        }
        Ok(loaded)
    }

    /// Applies one `key=value` override; keys match the config-file keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| anyhow!("key `{key}`: `{value}` is not a number"))
        };
        match key {
            "t" => self.params.maturity_t = num()?,
            "r" => self.params.risk_free_r = num()?,
            "sigma" => self.params.sigma = num()?,
            "r_g" => self.params.guaranteed_rg = num()?,
            "delta" => self.params.delta = num()?,
            "beta" => self.params.beta = num()?,
            "gamma" => self.params.gamma = num()?,
            "alpha" => self.params.alpha = num()?,
            "a0" => self.params.a0 = num()?,
            "fee_p" => self.params.fee_p = num()?,
            "fee_q" => self.params.fee_q = num()?,
            "n_steps" => {
                self.n_steps = value
                    .parse()
                    .map_err(|_| anyhow!("key `n_steps`: `{value}` is not an integer"))?
            }
            "x_max" => self.x_max = Some(num()?),
            "n_paths" => {
                self.mc.n_paths = value
                    .parse()
                    .map_err(|_| anyhow!("key `n_paths`: `{value}` is not an integer"))?
            }
            "steps_per_year" => {
                self.mc.steps_per_year = value
                    .parse()
                    .map_err(|_| anyhow!("key `steps_per_year`: `{value}` is not an integer"))?
            }
            "seed" => {
                self.mc.seed = value
                    .parse()
                    .map_err(|_| anyhow!("key `seed`: `{value}` is not an integer"))?
            }
            "bridge_correction" => {
                self.mc.bridge_correction = value
                    .parse()
                    .map_err(|_| anyhow!("key `bridge_correction`: `{value}` is not a bool"))?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    /// Validates the contract parameters, translating core field names back
    /// to the configuration keys the user typed.
    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| {
            let msg = e.to_string();
            let remapped = [
                ("maturity_t", "t"),
                ("risk_free_r", "r"),
                ("guaranteed_rg", "r_g"),
            ]
            .iter()
            .fold(msg, |m, (field, key)| m.replace(field, key));
            anyhow!("{remapped}")
        })?;
        if self.n_steps == 0 {
            bail!("key `n_steps` must be >= 1");
        }
        if self.mc.n_paths == 0 {
            bail!("key `n_paths` must be >= 1");
        }
        if self.mc.steps_per_year == 0 {
            bail!("key `steps_per_year` must be >= 1");
        }
        Ok(())
    }
}

fn set_if<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses `"alpha=0.2,0.5; gamma=0.15,0.4"` into sweep entries.
pub fn parse_sweep_list(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|entry| parse_sweep_entry(entry.trim()))
        .collect()
}

/// Parses a single `name=v1,v2,...` sweep entry.
pub fn parse_sweep_entry(entry: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = entry
        .split_once('=')
        .ok_or_else(|| anyhow!("sweep entry `{entry}` must look like name=v1,v2"))?;
    let name = name.trim().to_string();
    if !matches!(name.as_str(), "alpha" | "gamma" | "r_g") {
        bail!("sweep parameter `{name}` is not supported (use alpha, gamma or r_g)");
    }
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("sweep value `{v}` is not a number"))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        bail!("sweep entry `{entry}` has no values");
    }
    Ok((name, values))
}
