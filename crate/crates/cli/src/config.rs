use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use layerlock::harness::{AttackConfig, CustomizeConfig, DeploymentStrategy, VictimConfig, DEFAULT_EPSILON, DEFAULT_SEEDS};
use layerlock::theory::BetaOptions;

use crate::CliError;

/// Everything a run depends on. Unknown keys anywhere are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed for victim training, customization data and the theory
    /// stacks; `--seed` overrides it. Attack and DD seeds are separate lists.
    pub seed: Option<u64>,
    pub victim: VictimConfig,
    pub attack: AttackConfig,
    pub dd: DdConfig,
    pub strategies: Vec<StrategyEntry>,
    pub customize: CustomizeConfig,
    pub sweep: SweepConfig,
    pub theory: TheoryConfig,
}

/// A strategy given either by name (`"solid"` means "use the selected
/// prefix") or as an explicit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategyEntry {
    Name(String),
    Explicit(DeploymentStrategy),
}

pub fn default_strategies() -> Vec<StrategyEntry> {
    ["solid", "sap-dp", "fully-secured", "darknetz"]
        .iter()
        .map(|s| StrategyEntry::Name(s.to_string()))
        .collect()
}

/// A strategy whose SOLID prefix may still need the DD curve.
#[derive(Clone, Debug, PartialEq)]
pub enum Planned {
    AutoSolid,
    Fixed(DeploymentStrategy),
}

impl StrategyEntry {
    pub fn plan(&self) -> Result<Planned, CliError> {
        match self {
            StrategyEntry::Explicit(s) => Ok(Planned::Fixed(s.clone())),
            StrategyEntry::Name(n) => match n.as_str() {
                "solid" => Ok(Planned::AutoSolid),
                "darknetz" => Ok(Planned::Fixed(DeploymentStrategy::Darknetz)),
                "sap" => Ok(Planned::Fixed(DeploymentStrategy::Sap { open_k: None })),
                "sap-dp" => Ok(Planned::Fixed(DeploymentStrategy::SapDp {
                    open_k: None,
                    noise_scale: layerlock::harness::DEFAULT_DP_NOISE,
                })),
                "fully-secured" => Ok(Planned::Fixed(DeploymentStrategy::FullySecured)),
                other => Err(CliError::Usage(format!(
                    "unknown strategy '{other}' (expected solid, darknetz, sap, sap-dp, fully-secured or a table)"
                ))),
            },
        }
    }
}

fn default_dd_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdConfig {
    /// Prefix lengths on the curve; every prefix `0..=L` when absent.
    pub prefixes: Option<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
}

impl Default for DdConfig {
    fn default() -> Self {
        Self {
            prefixes: None,
            seeds: default_dd_seeds(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Width of the sliding window of consecutive secured layers.
    pub window: usize,
    /// Prefix sizes of the size sweep; `1..=L` when absent.
    pub sizes: Option<Vec<usize>>,
    /// Also fine-tune every size-sweep row on the downstream task.
    pub customize: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            window: 1,
            sizes: None,
            customize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub n: usize,
    pub d: usize,
    pub dq: usize,
    /// Operator-norm budget of the random stacks.
    pub budget: f64,
    /// Finite depth of the swept stack.
    pub depth: usize,
    pub alphas: Vec<f64>,
    /// Seeds of the Xavier replacements.
    pub seeds: Vec<u64>,
    pub adversarial_budget: f64,
    pub adversarial_depth: usize,
    pub replacements: usize,
    pub beta: BetaOptions,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            n: 8,
            d: 16,
            dq: 4,
            budget: 0.1,
            depth: 64,
            alphas: vec![0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0],
            seeds: (0..10).collect(),
            adversarial_budget: 2.0,
            adversarial_depth: 64,
            replacements: 20,
            beta: BetaOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {}", e.message())))
    }

    /// Applies the seed override and fills defaults so that the hash covers
    /// every value the run actually uses.
    pub fn resolve(mut self, seed: Option<u64>) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.victim.seed = s;
            self.customize.seed = s;
        }
        if self.strategies.is_empty() {
            self.strategies = default_strategies();
        }
        self
    }

    pub fn theory_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// Hash of what determines the victim checkpoint.
    pub fn victim_hash(&self) -> String {
        let json = serde_json::to_string(&self.victim).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
