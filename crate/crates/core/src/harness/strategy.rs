use std::fmt;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::toymodel::SecuredSet;

/// Laplace scale of the noisy-output baseline.
pub const DEFAULT_DP_NOISE: f64 = 0.5;

fn default_dp_noise() -> f64 {
    DEFAULT_DP_NOISE
}

/// How a vendor splits a model between hidden and public parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeploymentStrategy {
    /// Bottom prefix `1..=l`.
    Solid { l: usize },
    /// Only the top decoder layer.
    Darknetz,
    /// The bottom `open_k` layers public, the rest hidden.
    Sap {
        #[serde(default)]
        open_k: Option<usize>,
    },
    /// As `Sap`, with Laplace noise on every returned logit.
    SapDp {
        #[serde(default)]
        open_k: Option<usize>,
        #[serde(default = "default_dp_noise")]
        noise_scale: f64,
    },
    FullySecured,
    Custom { secured: SecuredSet },
}

/// Open bottom layers for the SAP baselines at `depth`: six of 32 scaled
/// proportionally, at least one.
pub fn sap_open_layers(depth: usize) -> usize {
    ((6.0 * depth as f64 / 32.0).round() as usize).max(1)
}

impl DeploymentStrategy {
    pub fn secured_set(&self, depth: usize) -> Result<SecuredSet> {
        let set = match self {
            DeploymentStrategy::Solid { l } => {
                if *l == 0 || *l > depth {
                    return Err(HarnessError::Config(format!("SOLID prefix {l} outside 1..={depth}")));
                }
                SecuredSet::prefix(*l)
            }
            DeploymentStrategy::Darknetz => SecuredSet::layers([depth]),
            DeploymentStrategy::Sap { open_k } | DeploymentStrategy::SapDp { open_k, .. } => {
                let open = open_k.unwrap_or_else(|| sap_open_layers(depth));
                SecuredSet::layers(open + 1..=depth)
            }
            DeploymentStrategy::FullySecured => SecuredSet::all(depth),
            DeploymentStrategy::Custom { secured } => secured.clone(),
        };
        set.validate(depth)?;
        Ok(set)
    }

    /// Laplace scale applied to query answers.
    pub fn noise_scale(&self) -> f64 {
        match self {
            DeploymentStrategy::SapDp { noise_scale, .. } => *noise_scale,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.noise_scale();
        if !(b >= 0.0 && b.is_finite()) {
            return Err(HarnessError::Config(format!("noise scale {b} must be finite and >= 0")));
        }
        Ok(())
    }

    /// Short column label.
    pub fn label(&self) -> String {
        match self {
            DeploymentStrategy::Solid { .. } => "SOLID".into(),
            DeploymentStrategy::Darknetz => "DarkneTZ".into(),
            DeploymentStrategy::Sap { .. } => "SAP".into(),
            DeploymentStrategy::SapDp { .. } => "SAP-DP".into(),
            DeploymentStrategy::FullySecured => "Fully-secured".into(),
            DeploymentStrategy::Custom { secured } => format!("Custom{secured}"),
        }
    }
}

impl fmt::Display for DeploymentStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeploymentStrategy::Solid { l } => write!(f, "SOLID(l={l})"),
            DeploymentStrategy::Sap { open_k: Some(k) } => write!(f, "SAP(open={k})"),
            DeploymentStrategy::SapDp {
                open_k,
                noise_scale,
            } => match open_k {
                Some(k) => write!(f, "SAP-DP(open={k},b={noise_scale})"),
                None => write!(f, "SAP-DP(b={noise_scale})"),
            },
            other => f.write_str(&other.label()),
        }
    }
}
