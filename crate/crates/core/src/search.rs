//! Choosing ε from RDR profiles, with and without releasing it.

use serde::{Deserialize, Serialize};

use crate::amount::PrivacyAmount;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mechanism::{apply_mechanism, Mechanism, MechanismSpec};
use crate::noise::{NoiseSource, NoiseStream, StreamLabel};
use crate::preference::{evaluate_preference, PrivacyPreference};
use crate::projection::{project_query_attributes, ProjectedDataset};
use crate::query::{global_sensitivity, Query, QueryOutput};
use crate::rdr::{rdr_profile, EpsilonCandidate, RdrProfile};
use crate::sensitivity::{per_instance_sensitivity, PisTable};

/// Candidate ε values, strictly descending and positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsilonGrid {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EpsilonGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        EpsilonGrid::new(values)
    }
}

impl From<EpsilonGrid> for Vec<f64> {
    fn from(g: EpsilonGrid) -> Self {
        g.values
    }
}

impl EpsilonGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("epsilon grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("grid value {v} is not a positive number")));
        }
        if values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidParameter("grid must be strictly descending".into()));
        }
        Ok(Self { values })
    }

    /// 10, 9, …, 1, 0.9, …, 0.1, 0.09, …, 0.01, 0.009, …, 0.001.
    pub fn default37() -> Self {
        let mut text: Vec<String> = (1..=10).rev().map(|d| d.to_string()).collect();
        for zeros in ["", "0", "00"] {
            text.extend((1..=9).rev().map(|d| format!("0.{zeros}{d}")));
        }
        let values = text.iter().map(|t| t.parse().expect("literal")).collect();
        Self::new(values).expect("default grid is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps the values strictly greater than `floor`, compared exactly.
    /// The result may be empty.
    pub fn retain_above(&self, floor: PrivacyAmount) -> Self {
        Self {
            values: self
                .values
                .iter()
                .copied()
                .filter(|v| PrivacyAmount::from_f64(*v).map_or(true, |a| a > floor))
                .collect(),
        }
    }
}

/// Sparse vector parameters with the `1 : 2^(2/3)` budget split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SvtConfig {
    pub eps_svt: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub delta_svt: f64,
    pub tau_var: f64,
}

impl SvtConfig {
    pub fn new(eps_svt: f64, n: usize, tau_var: f64) -> Result<Self> {
        if !(eps_svt > 0.0 && eps_svt.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps_svt must be > 0, got {eps_svt}")));
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(tau_var >= 0.0 && tau_var.is_finite()) {
            return Err(Error::InvalidPreference(format!("tau_var must be >= 0, got {tau_var}")));
        }
        let eps1 = eps_svt / (1.0 + 2f64.powf(2.0 / 3.0));
        Ok(Self {
            eps_svt,
            eps1,
            eps2: eps_svt - eps1,
            delta_svt: 1.0 / n as f64,
            tau_var,
        })
    }
}

/// Above-threshold test with a single positive answer.
pub struct SparseVector {
    rho: f64,
    scale: f64,
    stream: NoiseStream,
}

impl SparseVector {
    /// Draws the threshold noise `ρ ~ Lap(Δ/ε′)`.
    pub fn start(cfg: &SvtConfig, mut stream: NoiseStream) -> Self {
        let rho = stream.laplace(cfg.delta_svt / cfg.eps1);
        Self {
            rho,
            scale: 2.0 * cfg.delta_svt / cfg.eps2,
            stream,
        }
    }

    /// `q + Lap(2Δ/ε″) ≥ τ + ρ`.
    pub fn test(&mut self, q: f64, threshold: f64) -> bool {
        q + self.stream.laplace(self.scale) >= threshold + self.rho
    }

    pub fn draws(&self) -> u64 {
        self.stream.draws()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvtOutcome {
    Above(usize),
    Exhausted,
}

/// Index of the first stream element that tests above `threshold`.
pub fn svt_above_threshold(
    queries: impl IntoIterator<Item = f64>,
    threshold: f64,
    cfg: &SvtConfig,
    stream: NoiseStream,
) -> SvtOutcome {
    let mut svt = SparseVector::start(cfg, stream);
    for (i, q) in queries.into_iter().enumerate() {
        if svt.test(q, threshold) {
            return SvtOutcome::Above(i);
        }
    }
    SvtOutcome::Exhausted
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Parallel workers for per-instance sensitivity.
    pub workers: usize,
    /// Replaces the global sensitivity of the query.
    pub sensitivity_override: Option<f64>,
}

/// A query prepared for the search: projection, sensitivities, and Δ.
#[derive(Clone, Debug)]
pub struct PreparedQuery {
    query: Query,
    mechanism: Mechanism,
    projection: ProjectedDataset,
    pis: PisTable,
    delta_p: f64,
}

impl PreparedQuery {
    pub fn prepare(d: &Dataset, q: &Query, mechanism: Mechanism, opts: SearchOptions) -> Result<Self> {
        let norm = mechanism.norm();
        let delta_p = match opts.sensitivity_override {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                return Err(Error::InvalidParameter(format!("sensitivity override must be > 0, got {v}")))
            }
            None => {
                q.validate(d.schema())?;
                global_sensitivity(q, d.schema(), d.n(), norm)?
            }
        };
        let projection = project_query_attributes(d, q)?;
        let pis = per_instance_sensitivity(&projection, q, norm, opts.workers.max(1))?;
        Ok(Self {
            query: q.clone(),
            mechanism,
            projection,
            pis,
            delta_p,
        })
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn projection(&self) -> &ProjectedDataset {
        &self.projection
    }

    pub fn pis(&self) -> &PisTable {
        &self.pis
    }

    pub fn delta_p(&self) -> f64 {
        self.delta_p
    }

    pub fn k(&self) -> usize {
        self.query.k()
    }

    pub fn n(&self) -> usize {
        self.projection.n()
    }

    pub fn raw_output(&self) -> &QueryOutput {
        self.pis.full_output()
    }

    pub fn profile(&self, epsilon: EpsilonCandidate) -> Result<RdrProfile> {
        rdr_profile(&self.pis, self.mechanism, epsilon, self.k(), self.delta_p)
    }

    fn release(&self, epsilon: f64, noise: &NoiseSource, index: usize) -> Result<(QueryOutput, u64)> {
        let spec = MechanismSpec::new(self.mechanism, epsilon)?;
        let mut stream = noise.stream(StreamLabel::Release(index));
        let out = apply_mechanism(self.raw_output(), &spec, self.delta_p, &mut stream)?;
        Ok((out, stream.draws()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Choose ε from RDR and keep it private.
    Rdr,
    /// Choose ε with the sparse vector test and release it.
    Svt,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rdr" => Ok(Algorithm::Rdr),
            "svt" => Ok(Algorithm::Svt),
            other => Err(Error::InvalidParameter(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Rdr => "rdr",
            Algorithm::Svt => "svt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    Found,
    NoSuitableEpsilon,
}

/// Privacy cost of one decision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charge {
    pub epsilon: PrivacyAmount,
    pub delta: PrivacyAmount,
}

/// Controller-side search result. Use [`SearchResult::analyst_release`] for
/// what may leave the controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub algorithm: Algorithm,
    pub status: SearchStatus,
    pub chosen_epsilon: Option<f64>,
    pub chosen_index: Option<usize>,
    pub output: Option<QueryOutput>,
    pub epsilon_released: bool,
    pub charge: Charge,
    /// Preference statistic at the chosen ε.
    pub statistic: Option<f64>,
    pub candidates_examined: usize,
    pub noise_draws: u64,
}

/// The part of a result an analyst may see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalystRelease {
    pub output: QueryOutput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl SearchResult {
    fn not_found(algorithm: Algorithm, examined: usize, draws: u64) -> Self {
        Self {
            algorithm,
            status: SearchStatus::NoSuitableEpsilon,
            chosen_epsilon: None,
            chosen_index: None,
            output: None,
            epsilon_released: algorithm == Algorithm::Svt,
            charge: Charge::default(),
            statistic: None,
            candidates_examined: examined,
            noise_draws: draws,
        }
    }

    pub fn is_found(&self) -> bool {
        self.status == SearchStatus::Found
    }

    pub fn analyst_release(&self) -> Option<AnalystRelease> {
        Some(AnalystRelease {
            output: self.output.clone()?,
            epsilon: if self.epsilon_released {
                self.chosen_epsilon
            } else {
                None
            },
        })
    }
}

fn amount(v: f64) -> Result<PrivacyAmount> {
    PrivacyAmount::from_f64(v).map_err(|_| {
        Error::InvalidParameter(format!("{v} is not representable as an exact privacy amount"))
    })
}

/// Scans `grid` in order and releases at the first ε whose RDR profile
/// satisfies the ratio preference. The chosen ε is not marked releasable.
pub fn find_epsilon_from_rdr(
    prepared: &PreparedQuery,
    grid: &EpsilonGrid,
    pref: &PrivacyPreference,
    noise: &NoiseSource,
) -> Result<SearchResult> {
    if !pref.is_ratio() {
        return Err(Error::InvalidPreference(
            "the rdr algorithm takes a ratio preference; use svt for normalized variance".into(),
        ));
    }
    for (i, &eps) in grid.values().iter().enumerate() {
        let profile = prepared.profile(EpsilonCandidate::Finite(eps))?;
        let (ok, stat) = evaluate_preference(&profile, pref)?;
        if ok {
            let (output, draws) = prepared.release(eps, noise, i)?;
            return Ok(SearchResult {
                algorithm: Algorithm::Rdr,
                status: SearchStatus::Found,
                chosen_epsilon: Some(eps),
                chosen_index: Some(i),
                output: Some(output),
                epsilon_released: false,
                charge: Charge {
                    epsilon: amount(eps)?,
                    delta: amount(prepared.mechanism.delta())?,
                },
                statistic: Some(stat),
                candidates_examined: i + 1,
                noise_draws: draws,
            });
        }
    }
    Ok(SearchResult::not_found(Algorithm::Rdr, grid.len(), 0))
}

/// Scans `grid` with the sparse vector test on `−Var ≥ −τ_var`, where `Var`
/// is the population variance of max-normalized RDRs, and releases both the
/// output and the chosen ε. The charge is `ε + ε_svt`.
pub fn find_and_release_epsilon(
    prepared: &PreparedQuery,
    grid: &EpsilonGrid,
    cfg: &SvtConfig,
    noise: &NoiseSource,
) -> Result<SearchResult> {
    let expected = 1.0 / prepared.n() as f64;
    if cfg.delta_svt != expected {
        return Err(Error::InvalidParameter(format!(
            "svt sensitivity {} does not match 1/n = {expected}",
            cfg.delta_svt
        )));
    }
    let mut svt = SparseVector::start(cfg, noise.stream(StreamLabel::Svt));
    for (i, &eps) in grid.values().iter().enumerate() {
        let var = prepared.profile(EpsilonCandidate::Finite(eps))?.normalized_variance();
        if svt.test(-var, -cfg.tau_var) {
            let (output, draws) = prepared.release(eps, noise, i)?;
            return Ok(SearchResult {
                algorithm: Algorithm::Svt,
                status: SearchStatus::Found,
                chosen_epsilon: Some(eps),
                chosen_index: Some(i),
                output: Some(output),
                epsilon_released: true,
                charge: Charge {
                    epsilon: amount(eps)?.checked_add(amount(cfg.eps_svt)?)?,
                    delta: amount(prepared.mechanism.delta())?,
                },
                statistic: Some(var),
                candidates_examined: i + 1,
                noise_draws: svt.draws() + draws,
            });
        }
    }
    Ok(SearchResult::not_found(Algorithm::Svt, grid.len(), svt.draws()))
}
