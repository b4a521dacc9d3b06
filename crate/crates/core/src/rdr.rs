//! Relative disclosure risk indicators and ex-post per-instance loss.

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mechanism::{noise_params, Mechanism, MechanismSpec, NoiseParams};
use crate::query::QueryOutput;
use crate::sensitivity::{Norm, PisId, PisTable};

/// Number of equal-width histogram buckets over `[rdr_min, rdr_max]`.
pub const HISTOGRAM_BUCKETS: usize = 16;

/// A candidate ε, or the "no noise" reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonCandidate {
    Finite(f64),
    Infinite,
}

impl EpsilonCandidate {
    pub fn value(self) -> f64 {
        match self {
            EpsilonCandidate::Finite(v) => v,
            EpsilonCandidate::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for EpsilonCandidate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpsilonCandidate::Finite(v) => s.serialize_f64(*v),
            EpsilonCandidate::Infinite => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonCandidate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(EpsilonCandidate::Finite(v)),
            Raw::Text(t) if t == "infinity" => Ok(EpsilonCandidate::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid epsilon `{t}`"))),
        }
    }
}

/// `‖o − q(x_{-i})‖` for one neighbor.
pub fn output_dependent_rdr(o: &QueryOutput, neighbor_out: &QueryOutput, norm: Norm) -> Result<f64> {
    norm.distance(o.values(), neighbor_out.values())
}

/// RDR bounds for every record at one candidate ε.
#[derive(Clone, Debug)]
pub struct RdrProfile {
    epsilon: EpsilonCandidate,
    mechanism: Mechanism,
    k: usize,
    per_unique: Vec<f64>,
    weights: Vec<usize>,
    row_uid: Arc<[u32]>,
    pis_ref: PisId,
    rdr_min: f64,
    rdr_max: f64,
}

/// Builds the RDR profile: `PIS + kΔ₁/ε` under Laplace and
/// `sqrt(PIS² + kσ²)` under Gaussian. At ε = ∞ every RDR equals its PIS.
pub fn rdr_profile(
    pis: &PisTable,
    mechanism: Mechanism,
    epsilon: EpsilonCandidate,
    k: usize,
    delta_p: f64,
) -> Result<RdrProfile> {
    if pis.norm() != mechanism.norm() {
        return Err(Error::InvalidParameter(format!(
            "{:?} sensitivities do not fit the {:?} mechanism",
            pis.norm(),
            mechanism.family()
        )));
    }
    let per_unique: Vec<f64> = match epsilon {
        EpsilonCandidate::Infinite => pis.per_unique().to_vec(),
        EpsilonCandidate::Finite(eps) => {
            if !eps.is_finite() {
                return Err(Error::InvalidParameter("use EpsilonCandidate::Infinite".into()));
            }
            let spec = MechanismSpec::new(mechanism, eps)?;
            let kf = k as f64;
            match noise_params(&spec, delta_p)? {
                NoiseParams::Laplace { .. } => {
                    let term = kf * delta_p / eps;
                    pis.per_unique().iter().map(|p| p + term).collect()
                }
                NoiseParams::Gaussian { variance } => {
                    let term = kf * variance;
                    pis.per_unique().iter().map(|p| (p * p + term).sqrt()).collect()
                }
            }
        }
    };
    let rdr_min = per_unique.iter().copied().fold(f64::INFINITY, f64::min);
    let rdr_max = per_unique.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RdrProfile {
        epsilon,
        mechanism,
        k,
        per_unique,
        weights: pis.weights().to_vec(),
        row_uid: Arc::clone(pis.row_uid()),
        pis_ref: pis.id(),
        rdr_min,
        rdr_max,
    })
}

impl RdrProfile {
    pub fn epsilon(&self) -> EpsilonCandidate {
        self.epsilon
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pis_ref(&self) -> PisId {
        self.pis_ref
    }

    pub fn n(&self) -> usize {
        self.row_uid.len()
    }

    pub fn per_unique(&self) -> &[f64] {
        &self.per_unique
    }

    pub fn per_row(&self, row: usize) -> f64 {
        self.per_unique[self.row_uid[row] as usize]
    }

    pub fn rdr_min(&self) -> f64 {
        self.rdr_min
    }

    pub fn rdr_max(&self) -> f64 {
        self.rdr_max
    }

    /// `rdr_min / rdr_max`, or 1 when every RDR is zero.
    pub fn ratio(&self) -> f64 {
        if self.rdr_max == 0.0 {
            1.0
        } else {
            self.rdr_min / self.rdr_max
        }
    }

    /// Population variance over all rows of the RDRs divided by `rdr_max`.
    pub fn normalized_variance(&self) -> f64 {
        if self.rdr_max == 0.0 {
            return 0.0;
        }
        let n = self.n() as f64;
        let norm = |v: f64| v / self.rdr_max;
        let mean = self
            .per_unique
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| norm(*v) * *w as f64)
            .sum::<f64>()
            / n;
        self.per_unique
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| (norm(*v) - mean).powi(2) * *w as f64)
            .sum::<f64>()
            / n
    }

    /// Row counts in equal-width buckets over `[rdr_min, rdr_max]`.
    pub fn histogram(&self) -> [u64; HISTOGRAM_BUCKETS] {
        let mut buckets = [0u64; HISTOGRAM_BUCKETS];
        let width = self.rdr_max - self.rdr_min;
        for (v, w) in self.per_unique.iter().zip(&self.weights) {
            let b = if width > 0.0 {
                (((v - self.rdr_min) / width) * HISTOGRAM_BUCKETS as f64) as usize
            } else {
                0
            };
            buckets[b.min(HISTOGRAM_BUCKETS - 1)] += *w as u64;
        }
        buckets
    }

    /// Lower median RDR of the given rows.
    pub fn median_of(&self, rows: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::InvalidPreference("empty group".into()));
        }
        let mut values: Vec<f64> = rows.iter().map(|&r| self.per_row(r)).collect();
        let mid = (values.len() - 1) / 2;
        let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
        Ok(*m)
    }
}

/// Realized per-instance loss of record `i` given output `o`, from the
/// mechanism's noise parameters.
pub fn ex_post_loss_with_params(
    o: &QueryOutput,
    full_out: &QueryOutput,
    neighbor_out: &QueryOutput,
    params: &NoiseParams,
) -> Result<f64> {
    if full_out.k() != neighbor_out.k() {
        return Err(Error::DimensionMismatch {
            left: full_out.k(),
            right: neighbor_out.k(),
        });
    }
    Ok(match *params {
        NoiseParams::Laplace { scale } => {
            let far = Norm::L1.distance(o.values(), neighbor_out.values())?;
            let near = Norm::L1.distance(o.values(), full_out.values())?;
            ((far - near) / scale).abs()
        }
        NoiseParams::Gaussian { variance } => {
            let far = Norm::L2.distance(o.values(), neighbor_out.values())?;
            let near = Norm::L2.distance(o.values(), full_out.values())?;
            ((far * far - near * near) / (2.0 * variance)).abs()
        }
    })
}

/// `|ε(‖o−q(x_{-i})‖₁ − ‖o−q(x)‖₁)/Δ₁|` under Laplace and
/// `|(‖o−q(x_{-i})‖₂² − ‖o−q(x)‖₂²)/(2σ²)|` under Gaussian.
pub fn ex_post_loss(
    o: &QueryOutput,
    full_out: &QueryOutput,
    neighbor_out: &QueryOutput,
    spec: &MechanismSpec,
    delta_p: f64,
) -> Result<f64> {
    ex_post_loss_with_params(o, full_out, neighbor_out, &noise_params(spec, delta_p)?)
}
