use std::path::Path;

use anyhow::{bail, Context, Result};
use riskscope_core::api::mechanism_from;
use riskscope_core::{
    load_dataset, Algorithm, AnswerConfig, Dataset, EpsilonGrid, Family, PreferenceConfig, Query, Schema,
    SearchOptions,
};
use serde::Deserialize;

use crate::DataError;

pub struct Inputs {
    pub dataset: Dataset,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| DataError(e).into())
}

impl Inputs {
    pub fn load(data: &Path, schema: &Path) -> Result<Self> {
        let schema = Schema::from_json(&read(schema)?).with_context(|| format!("schema {}", schema.display()))?;
        let file = std::fs::File::open(data)
            .with_context(|| format!("opening {}", data.display()))
            .map_err(DataError)?;
        let dataset = load_dataset(std::io::BufReader::new(file), &schema)
            .with_context(|| format!("loading {}", data.display()))?;
        Ok(Self { dataset })
    }

    pub fn query(&self, path: &Path) -> Result<Query> {
        let q = Query::from_json(&read(path)?).with_context(|| format!("query {}", path.display()))?;
        q.validate(self.dataset.schema())
            .with_context(|| format!("query {}", path.display()))?;
        Ok(q)
    }
}

pub fn read_preference(text: Option<&str>, tau_p: Option<f64>, tau_var: Option<f64>) -> Result<PreferenceConfig> {
    match (text, tau_p, tau_var) {
        (Some(t), None, None) => {
            let json = if t.trim_start().starts_with('{') { t.to_string() } else { read(Path::new(t))? };
            serde_json::from_str(&json)
                .context("parsing preference")
                .map_err(|e| DataError(e).into())
        }
        (None, Some(tau_p), None) => Ok(PreferenceConfig::MinMaxRatio { tau_p }),
        (None, None, Some(tau_var)) => Ok(PreferenceConfig::NormalizedVariance { tau_var }),
        _ => bail!(DataError(anyhow::anyhow!(
            "give exactly one of --preference, --tau-p, --tau-var"
        ))),
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// `1000`, `10k`, `1m`.
pub fn parse_size(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim().to_ascii_lowercase();
    let (digits, scale) = match s.strip_suffix('k') {
        Some(d) => (d, 1_000),
        None => match s.strip_suffix('m') {
            Some(d) => (d, 1_000_000),
            None => (s.as_str(), 1),
        },
    };
    digits
        .parse::<usize>()
        .ok()
        .and_then(|v| v.checked_mul(scale))
        .filter(|&v| v > 0)
        .ok_or_else(|| format!("invalid size `{s}`"))
}

/// One step of a `session replay` script.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    #[serde(default)]
    pub query_id: Option<String>,
    pub query: Query,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    pub preference: PreferenceConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mechanism: Option<Family>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub eps_svt: Option<f64>,
    #[serde(default)]
    pub grid: Option<EpsilonGrid>,
    #[serde(default)]
    pub sensitivity_override: Option<f64>,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Rdr
}

impl ScriptStep {
    pub fn config(&self, workers: usize) -> Result<AnswerConfig> {
        Ok(AnswerConfig {
            algorithm: self.algorithm,
            preference: self.preference.clone(),
            mechanism: mechanism_from(self.mechanism, self.delta)?,
            grid: self.grid.clone().unwrap_or_else(EpsilonGrid::default37),
            seed: self.seed,
            eps_svt: self.eps_svt.unwrap_or(riskscope_core::session::DEFAULT_EPS_SVT),
            options: SearchOptions {
                workers,
                sensitivity_override: self.sensitivity_override,
            },
        })
    }
}
