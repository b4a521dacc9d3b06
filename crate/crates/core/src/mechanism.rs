//! Laplace and Gaussian mechanisms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::query::QueryOutput;
use crate::sensitivity::Norm;

/// Default δ for the Gaussian mechanism.
pub const DEFAULT_GAUSSIAN_DELTA: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Laplace,
    Gaussian,
}

impl Family {
    pub fn norm(self) -> Norm {
        match self {
            Family::Laplace => Norm::L1,
            Family::Gaussian => Norm::L2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Laplace => "laplace",
            Family::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Family::Laplace),
            "gaussian" => Ok(Family::Gaussian),
            other => Err(Error::InvalidParameter(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// A mechanism family with its δ, before ε is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMechanism")]
pub struct Mechanism {
    family: Family,
    delta: f64,
}

#[derive(Deserialize)]
struct RawMechanism {
    family: Family,
    delta: f64,
}

impl TryFrom<RawMechanism> for Mechanism {
    type Error = Error;

    fn try_from(r: RawMechanism) -> Result<Self> {
        Mechanism::new(r.family, r.delta)
    }
}

impl Mechanism {
    pub fn new(family: Family, delta: f64) -> Result<Self> {
        let ok = match family {
            Family::Laplace => delta == 0.0,
            Family::Gaussian => delta > 0.0 && delta < 1.0,
        };
        if !ok {
            return Err(Error::InvalidParameter(match family {
                Family::Laplace => format!("laplace requires delta = 0, got {delta}"),
                Family::Gaussian => format!("gaussian requires 0 < delta < 1, got {delta}"),
            }));
        }
        Ok(Self { family, delta })
    }

    pub fn laplace() -> Self {
        Self {
            family: Family::Laplace,
            delta: 0.0,
        }
    }

    pub fn gaussian(delta: f64) -> Result<Self> {
        Self::new(Family::Gaussian, delta)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn norm(&self) -> Norm {
        self.family.norm()
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<MechanismSpec> {
        MechanismSpec::new(self, epsilon)
    }
}

/// A mechanism at a specific ε. `f64::INFINITY` is the "no noise" sentinel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MechanismSpec {
    mechanism: Mechanism,
    epsilon: f64,
}

impl MechanismSpec {
    pub fn new(mechanism: Mechanism, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { mechanism, epsilon })
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn family(&self) -> Family {
        self.mechanism.family
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.mechanism.delta
    }

    pub fn norm(&self) -> Norm {
        self.mechanism.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseParams {
    Laplace { scale: f64 },
    Gaussian { variance: f64 },
}

/// `b = Δ₁/ε` for Laplace, `σ² = 2Δ₂² ln(1.25/δ)/ε²` for Gaussian.
pub fn noise_params(spec: &MechanismSpec, delta_p: f64) -> Result<NoiseParams> {
    if !(delta_p > 0.0 && delta_p.is_finite()) {
        return Err(Error::InvalidParameter(format!("sensitivity must be > 0, got {delta_p}")));
    }
    let eps = spec.epsilon;
    if !eps.is_finite() {
        return Err(Error::InvalidParameter("epsilon = infinity has no noise".into()));
    }
    Ok(match spec.family() {
        Family::Laplace => NoiseParams::Laplace { scale: delta_p / eps },
        Family::Gaussian => NoiseParams::Gaussian {
            variance: 2.0 * delta_p * delta_p * (1.25 / spec.delta()).ln() / (eps * eps),
        },
    })
}

/// Adds one independent noise draw per output coordinate.
pub fn apply_mechanism(
    out: &QueryOutput,
    spec: &MechanismSpec,
    delta_p: f64,
    stream: &mut NoiseStream,
) -> Result<QueryOutput> {
    if spec.epsilon.is_infinite() {
        return Ok(out.clone());
    }
    let params = noise_params(spec, delta_p)?;
    let noisy = out
        .values()
        .iter()
        .map(|v| match params {
            NoiseParams::Laplace { scale } => v + stream.laplace(scale),
            NoiseParams::Gaussian { variance } => v + stream.gaussian(variance),
        })
        .collect();
    QueryOutput::new(noisy)
}
