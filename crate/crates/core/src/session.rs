//! Answering queries against one dataset under the odometer.

use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::amount::PrivacyAmount;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mechanism::{Family, Mechanism};
use crate::noise::NoiseSource;
use crate::odometer::Odometer;
use crate::preference::PreferenceConfig;
use crate::query::Query;
use crate::search::{
    find_and_release_epsilon, find_epsilon_from_rdr, Algorithm, AnalystRelease, EpsilonGrid,
    PreparedQuery, SearchOptions, SearchResult, SvtConfig,
};

pub const DEFAULT_EPS_SVT: f64 = 1.0;

fn default_eps_svt() -> f64 {
    DEFAULT_EPS_SVT
}

fn default_grid() -> EpsilonGrid {
    EpsilonGrid::default37()
}

fn default_mechanism() -> Mechanism {
    Mechanism::laplace()
}

/// How a controller asks for a query to be answered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerConfig {
    pub algorithm: Algorithm,
    pub preference: PreferenceConfig,
    #[serde(default = "default_mechanism")]
    pub mechanism: Mechanism,
    #[serde(default = "default_grid")]
    pub grid: EpsilonGrid,
    pub seed: u64,
    #[serde(default = "default_eps_svt")]
    pub eps_svt: f64,
    #[serde(default)]
    pub options: SearchOptions,
}

impl AnswerConfig {
    pub fn new(algorithm: Algorithm, preference: PreferenceConfig, seed: u64) -> Self {
        Self {
            algorithm,
            preference,
            mechanism: Mechanism::laplace(),
            grid: EpsilonGrid::default37(),
            seed,
            eps_svt: DEFAULT_EPS_SVT,
            options: SearchOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Answered,
    Rejected,
}

fn epsilon_string<S: Serializer>(a: &PrivacyAmount, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&a.render_epsilon())
}

/// Controller-side record of one decision, with everything needed to replay
/// it. Contains no timestamps, so it is byte-stable for a fixed seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub query_id: String,
    pub dataset_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub algorithm: Algorithm,
    pub mechanism: Family,
    pub delta: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_svt: Option<f64>,
    pub preference: PreferenceConfig,
    #[serde(serialize_with = "epsilon_string")]
    pub eps_c_before: PrivacyAmount,
    #[serde(serialize_with = "epsilon_string")]
    pub eps_c_after: PrivacyAmount,
    pub candidates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<SearchResult>,
}

impl DecisionRecord {
    pub fn analyst_release(&self) -> Option<AnalystRelease> {
        match self.decision {
            Decision::Answered => self.result.as_ref()?.analyst_release(),
            Decision::Rejected => None,
        }
    }
}

/// A dataset with its odometer.
#[derive(Debug)]
pub struct Session {
    dataset_id: String,
    dataset: Arc<Dataset>,
    odometer: Odometer,
}

impl Session {
    pub fn new(dataset_id: impl Into<String>, dataset: Arc<Dataset>, odometer: Odometer) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            dataset,
            odometer,
        }
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn odometer(&self) -> &Odometer {
        &self.odometer
    }

    pub fn odometer_mut(&mut self) -> &mut Odometer {
        &mut self.odometer
    }

    /// Truncates the grid at `eps_c`, runs the chosen algorithm, and charges
    /// the odometer when an ε is found. Evaluation failures and exhausted
    /// grids are rejections with no charge.
    pub fn answer_query(&mut self, query_id: &str, query: &Query, cfg: &AnswerConfig) -> Result<DecisionRecord> {
        let state = self.odometer.state();
        if state.entries().iter().any(|e| e.query_id == query_id) {
            return Err(Error::DuplicateQueryId(query_id.to_string()));
        }
        let pref = cfg.preference.resolve(&self.dataset)?;
        let tau_var = match (cfg.algorithm, &cfg.preference) {
            (Algorithm::Svt, PreferenceConfig::NormalizedVariance { tau_var }) => Some(*tau_var),
            (Algorithm::Svt, _) => {
                return Err(Error::InvalidPreference(
                    "the svt algorithm takes a normalized_variance preference".into(),
                ))
            }
            (Algorithm::Rdr, PreferenceConfig::NormalizedVariance { .. }) => {
                return Err(Error::InvalidPreference(
                    "the rdr algorithm takes a ratio preference".into(),
                ))
            }
            (Algorithm::Rdr, _) => None,
        };
        if tau_var.is_some() && !(cfg.eps_svt > 0.0 && cfg.eps_svt.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps_svt must be > 0, got {}", cfg.eps_svt)));
        }

        let eps_c = state.eps_c();
        let candidates = state.truncate_grid(&cfg.grid);
        let mut record = DecisionRecord {
            query_id: query_id.to_string(),
            dataset_id: self.dataset_id.clone(),
            decision: Decision::Rejected,
            reason: None,
            algorithm: cfg.algorithm,
            mechanism: cfg.mechanism.family(),
            delta: cfg.mechanism.delta(),
            seed: cfg.seed,
            eps_svt: tau_var.map(|_| cfg.eps_svt),
            preference: cfg.preference.clone(),
            eps_c_before: eps_c,
            eps_c_after: eps_c,
            candidates: candidates.values().to_vec(),
            result: None,
        };

        let delta = PrivacyAmount::from_f64(cfg.mechanism.delta())?;
        if state.delta_sum().checked_add(delta)? > state.delta_g() {
            record.reason = Some(format!(
                "delta budget: {} + {} exceeds delta_g = {}",
                state.delta_sum(),
                delta,
                state.delta_g()
            ));
            return Ok(record);
        }
        if candidates.is_empty() {
            record.reason = Some(format!("no candidate epsilon above eps_c = {}", eps_c.render_epsilon()));
            return Ok(record);
        }

        let outcome = PreparedQuery::prepare(&self.dataset, query, cfg.mechanism, cfg.options).and_then(|prepared| {
            let noise = NoiseSource::new(cfg.seed, query_id);
            match tau_var {
                None => find_epsilon_from_rdr(&prepared, &candidates, &pref, &noise),
                Some(tau_var) => {
                    let svt = SvtConfig::new(cfg.eps_svt, prepared.n(), tau_var)?;
                    find_and_release_epsilon(&prepared, &candidates, &svt, &noise)
                }
            }
        });
        let result = match outcome {
            Ok(r) => r,
            Err(e) if e.is_input_error() => {
                record.reason = Some(e.to_string());
                return Ok(record);
            }
            Err(e) => return Err(e),
        };
        if !result.is_found() {
            record.reason = Some("no candidate epsilon satisfies the preference".into());
            record.result = Some(result);
            return Ok(record);
        }
        let entry = self
            .odometer
            .charge(query_id, result.charge.epsilon, result.charge.delta, cfg.algorithm)?;
        record.decision = Decision::Answered;
        record.eps_c_after = entry.eps_c;
        record.result = Some(result);
        Ok(record)
    }
}
