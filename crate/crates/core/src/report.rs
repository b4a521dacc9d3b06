//! Controller-facing RDR analysis reports.

use serde::{Deserialize, Serialize};

use crate::amount::PrivacyAmount;
use crate::error::Result;
use crate::mechanism::Family;
use crate::rdr::{EpsilonCandidate, RdrProfile, HISTOGRAM_BUCKETS};
use crate::search::{EpsilonGrid, PreparedQuery};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PisSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub distinct_values: usize,
    pub histogram: [u64; HISTOGRAM_BUCKETS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub epsilon: EpsilonCandidate,
    pub rdr_min: f64,
    pub rdr_max: f64,
    pub ratio: f64,
    pub norm_variance: f64,
    pub histogram: [u64; HISTOGRAM_BUCKETS],
}

impl ReportRow {
    fn from_profile(p: &RdrProfile) -> Self {
        Self {
            epsilon: p.epsilon(),
            rdr_min: p.rdr_min(),
            rdr_max: p.rdr_max(),
            ratio: p.ratio(),
            norm_variance: p.normalized_variance(),
            histogram: p.histogram(),
        }
    }
}

/// RDR statistics per candidate ε. The first row is the no-noise reference
/// at ε = ∞, whose RDRs are the per-instance sensitivities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub report_version: u32,
    pub mechanism: Family,
    pub delta: f64,
    pub sensitivity: f64,
    pub k: usize,
    pub n: usize,
    pub unique_records: usize,
    pub eps_c: f64,
    pub grid_size: usize,
    pub pis: PisSummary,
    pub rows: Vec<ReportRow>,
    pub no_candidates: bool,
}

/// Analyzes `prepared` over the candidates of `grid` strictly above `eps_c`.
pub fn analyze(prepared: &PreparedQuery, grid: &EpsilonGrid, eps_c: PrivacyAmount) -> Result<AnalysisReport> {
    let candidates = grid.retain_above(eps_c);
    let reference = prepared.profile(EpsilonCandidate::Infinite)?;
    let pis = prepared.pis();
    let n = pis.n();
    let mean = pis
        .per_unique()
        .iter()
        .zip(pis.weights())
        .map(|(v, w)| v * *w as f64)
        .sum::<f64>()
        / n as f64;
    let mut distinct: Vec<f64> = pis.per_unique().to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let mut rows = vec![ReportRow::from_profile(&reference)];
    for &eps in candidates.values() {
        rows.push(ReportRow::from_profile(&prepared.profile(EpsilonCandidate::Finite(eps))?));
    }
    Ok(AnalysisReport {
        report_version: REPORT_VERSION,
        mechanism: prepared.mechanism().family(),
        delta: prepared.mechanism().delta(),
        sensitivity: prepared.delta_p(),
        k: prepared.k(),
        n,
        unique_records: prepared.projection().unique_count(),
        eps_c: eps_c.to_f64(),
        grid_size: grid.len(),
        pis: PisSummary {
            min: pis.min(),
            max: pis.max(),
            mean,
            distinct_values: distinct.len(),
            histogram: reference.histogram(),
        },
        no_candidates: candidates.is_empty(),
        rows,
    })
}
