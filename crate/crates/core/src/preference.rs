//! Controller privacy preferences over RDR profiles.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::query::{Predicate, Query};
use crate::rdr::RdrProfile;

/// A partition of row indices into named, non-empty, disjoint groups that
/// covers every row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowPartition {
    names: Vec<String>,
    rows: Vec<Vec<usize>>,
}

impl RowPartition {
    pub fn new(n: usize, groups: Vec<(String, Vec<usize>)>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::InvalidPreference("a partition needs at least two groups".into()));
        }
        let mut seen = vec![false; n];
        for (name, rows) in &groups {
            if rows.is_empty() {
                return Err(Error::InvalidPreference(format!("group `{name}` is empty")));
            }
            for &r in rows {
                if r >= n {
                    return Err(Error::InvalidPreference(format!(
                        "group `{name}` names row {r}, but n = {n}"
                    )));
                }
                if std::mem::replace(&mut seen[r], true) {
                    return Err(Error::InvalidPreference(format!("row {r} is in more than one group")));
                }
            }
        }
        if let Some(r) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPreference(format!("row {r} is in no group")));
        }
        let (names, rows) = groups.into_iter().unzip();
        Ok(Self { names, rows })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.rows
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrivacyPreference {
    MinMaxRatio { tau_p: f64 },
    GroupMedianRatio { partition: RowPartition, tau_p: f64 },
    NormalizedVariance { tau_var: f64 },
}

fn check_tau_p(tau_p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau_p) {
        Ok(())
    } else {
        Err(Error::InvalidPreference(format!("tau_p must lie in [0, 1], got {tau_p}")))
    }
}

fn check_tau_var(tau_var: f64) -> Result<()> {
    if tau_var >= 0.0 && tau_var.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPreference(format!("tau_var must be >= 0, got {tau_var}")))
    }
}

impl PrivacyPreference {
    pub fn min_max_ratio(tau_p: f64) -> Result<Self> {
        check_tau_p(tau_p)?;
        Ok(PrivacyPreference::MinMaxRatio { tau_p })
    }

    pub fn group_median_ratio(partition: RowPartition, tau_p: f64) -> Result<Self> {
        check_tau_p(tau_p)?;
        Ok(PrivacyPreference::GroupMedianRatio { partition, tau_p })
    }

    pub fn normalized_variance(tau_var: f64) -> Result<Self> {
        check_tau_var(tau_var)?;
        Ok(PrivacyPreference::NormalizedVariance { tau_var })
    }

    pub fn is_ratio(&self) -> bool {
        !matches!(self, PrivacyPreference::NormalizedVariance { .. })
    }
}

/// Returns whether `profile` satisfies `pref`, with the statistic compared.
///
/// The group statistic is the smallest ratio of group medians over all
/// ordered pairs, which is the smallest median over the largest.
pub fn evaluate_preference(profile: &RdrProfile, pref: &PrivacyPreference) -> Result<(bool, f64)> {
    Ok(match pref {
        PrivacyPreference::MinMaxRatio { tau_p } => {
            let r = profile.ratio();
            (r >= *tau_p, r)
        }
        PrivacyPreference::GroupMedianRatio { partition, tau_p } => {
            let medians = partition
                .groups()
                .iter()
                .map(|rows| profile.median_of(rows))
                .collect::<Result<Vec<_>>>()?;
            let lo = medians.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let r = if hi == 0.0 { 1.0 } else { lo / hi };
            (r >= *tau_p, r)
        }
        PrivacyPreference::NormalizedVariance { tau_var } => {
            let v = profile.normalized_variance();
            (v <= *tau_var, v)
        }
    })
}

/// Group membership in a preference file: a predicate or explicit rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<usize>>,
}

/// Wire form of a preference, e.g. `{"min_max_ratio":{"tau_p":0.9}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PreferenceConfig {
    MinMaxRatio { tau_p: f64 },
    GroupMedianRatio { tau_p: f64, groups: Vec<GroupConfig> },
    NormalizedVariance { tau_var: f64 },
}

impl PreferenceConfig {
    /// Resolves group predicates against `d`.
    pub fn resolve(&self, d: &Dataset) -> Result<PrivacyPreference> {
        match self {
            PreferenceConfig::MinMaxRatio { tau_p } => PrivacyPreference::min_max_ratio(*tau_p),
            PreferenceConfig::NormalizedVariance { tau_var } => {
                PrivacyPreference::normalized_variance(*tau_var)
            }
            PreferenceConfig::GroupMedianRatio { tau_p, groups } => {
                let mut resolved = Vec::with_capacity(groups.len());
                for g in groups {
                    let rows = match (&g.predicate, &g.rows) {
                        (Some(p), None) => matching_rows(d, p)?,
                        (None, Some(rows)) => rows.clone(),
                        _ => {
                            return Err(Error::InvalidPreference(format!(
                                "group `{}` needs exactly one of predicate or rows",
                                g.name
                            )))
                        }
                    };
                    resolved.push((g.name.clone(), rows));
                }
                PrivacyPreference::group_median_ratio(RowPartition::new(d.n(), resolved)?, *tau_p)
            }
        }
    }
}

fn matching_rows(d: &Dataset, p: &Predicate) -> Result<Vec<usize>> {
    let q = Query::count(Some(p.clone()));
    q.validate(d.schema())?;
    let layout = d.schema().layout();
    let compiled = q.compile(&layout)?;
    let mut rows = Vec::new();
    for r in 0..d.n() {
        if compiled.contribution(&d.row(r))? != crate::query::Contribution::Nothing {
            rows.push(r);
        }
    }
    Ok(rows)
}
