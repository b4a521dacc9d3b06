//! Request and response bodies of the HTTP service.
//!
//! Types whose names start with `Analyst` are the only bodies returned to the
//! analyst role.

use serde::{Deserialize, Serialize};

use crate::amount::PrivacyAmount;
use crate::error::{Error, Result};
use crate::mechanism::{Family, Mechanism, DEFAULT_GAUSSIAN_DELTA};
use crate::odometer::{CompBound, JournalEntry, OdometerState};
use crate::preference::PreferenceConfig;
use crate::query::{Query, QueryOutput};
use crate::report::AnalysisReport;
use crate::schema::Schema;
use crate::search::{Algorithm, EpsilonGrid, SearchOptions};
use crate::session::{AnswerConfig, DecisionRecord, DEFAULT_EPS_SVT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Analyst,
    Controller,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterDatasetRequest {
    pub csv: String,
    pub schema: Schema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_g: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterDatasetResponse {
    pub dataset_id: String,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitQueryRequest {
    pub dataset_id: String,
    pub query: Query,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TicketState {
    Submitted,
    Analyzed,
    Answered,
    Rejected,
}

/// Everything an analyst may see about a ticket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalystTicketView {
    pub id: String,
    pub dataset_id: String,
    pub state: TicketState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<QueryOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerTicketView {
    pub id: String,
    pub dataset_id: String,
    pub query: Query,
    pub state: TicketState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionRecord>,
    pub analyst_view: AnalystTicketView,
}

/// Query-string parameters of the analysis endpoint. `grid` is `default37` or
/// a comma-separated descending list.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity_override: Option<f64>,
}

pub fn mechanism_from(family: Option<Family>, delta: Option<f64>) -> Result<Mechanism> {
    match family.unwrap_or(Family::Laplace) {
        Family::Laplace => Mechanism::new(Family::Laplace, delta.unwrap_or(0.0)),
        Family::Gaussian => Mechanism::gaussian(delta.unwrap_or(DEFAULT_GAUSSIAN_DELTA)),
    }
}

/// Parses `default37` or a comma-separated list of ε values.
pub fn parse_grid(text: &str) -> Result<EpsilonGrid> {
    let text = text.trim();
    if text == "default37" {
        return Ok(EpsilonGrid::default37());
    }
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("invalid grid value `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    EpsilonGrid::new(values)
}

impl AnalysisParams {
    pub fn mechanism(&self) -> Result<Mechanism> {
        mechanism_from(self.mechanism, self.delta)
    }

    pub fn grid(&self, default: &EpsilonGrid) -> Result<EpsilonGrid> {
        self.grid.as_deref().map_or_else(|| Ok(default.clone()), parse_grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub algorithm: Algorithm,
    pub preference: PreferenceConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_svt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<EpsilonGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity_override: Option<f64>,
}

impl AnswerRequest {
    pub fn new(algorithm: Algorithm, preference: PreferenceConfig, seed: u64) -> Self {
        Self {
            algorithm,
            preference,
            seed,
            mechanism: None,
            delta: None,
            eps_svt: None,
            grid: None,
            sensitivity_override: None,
        }
    }

    pub fn to_config(&self, default_grid: &EpsilonGrid, workers: usize) -> Result<AnswerConfig> {
        Ok(AnswerConfig {
            algorithm: self.algorithm,
            preference: self.preference.clone(),
            mechanism: mechanism_from(self.mechanism, self.delta)?,
            grid: self.grid.clone().unwrap_or_else(|| default_grid.clone()),
            seed: self.seed,
            eps_svt: self.eps_svt.unwrap_or(DEFAULT_EPS_SVT),
            options: SearchOptions {
                workers,
                sensitivity_override: self.sensitivity_override,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub state: TicketState,
    pub decision: DecisionRecord,
}

/// Controller view of a dataset's odometer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometerView {
    pub dataset_id: String,
    pub eps_c: String,
    pub delta_sum: PrivacyAmount,
    pub delta_g: PrivacyAmount,
    pub comp_bound: CompBound,
    pub entries: Vec<JournalEntry>,
}

impl From<&OdometerState> for OdometerView {
    fn from(s: &OdometerState) -> Self {
        Self {
            dataset_id: s.dataset_id().to_string(),
            eps_c: s.eps_c().render_epsilon(),
            delta_sum: s.delta_sum(),
            delta_g: s.delta_g(),
            comp_bound: s.comp_bound(),
            entries: s.entries().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetDeltaGRequest {
    pub delta_g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResponse {
    pub query_id: String,
    pub report: AnalysisReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}
