use std::collections::BTreeSet;
use std::path::Path;

use cascade_core::adversary::{PackagingTable, PolicyName, SeedClaim};
use cascade_core::dynamics::{DynamicsParams, DEFAULT_TAU, DEFAULT_WINDOW};
use cascade_core::governance::{Ablation, Category, ClaimId, GovernancePolicy, OracleConfig, PolicyKind, DEFAULT_RETRY_CAP};
use cascade_core::run::{Defense, SinkPolicy, DEFAULT_REFLECTION_DETECT};
use cascade_core::TopologyConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRule {
    AutoGraybox,
    AutoBlackbox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Index(usize),
    Rule(TargetRule),
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Rule(TargetRule::AutoGraybox)
    }
}

fn default_claim() -> String {
    SeedClaim::default().claim_id.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub policy: PolicyName,
    #[serde(default)]
    pub target: TargetSpec,
    #[serde(default = "default_claim")]
    pub claim_id: String,
    #[serde(default)]
    pub category: Category,
}

impl AttackConfig {
    pub fn new(policy: PolicyName, target: TargetSpec) -> Self {
        Self {
            policy,
            target,
            claim_id: default_claim(),
            category: Category::Factuality,
        }
    }

    pub fn seed_claim(&self) -> SeedClaim {
        SeedClaim {
            claim_id: ClaimId(self.claim_id.clone()),
            category: self.category,
            payload: String::new(),
        }
    }
}

fn default_detect() -> f64 {
    DEFAULT_REFLECTION_DETECT
}

fn default_retry_cap() -> usize {
    DEFAULT_RETRY_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenseConfig {
    None,
    Reflection {
        #[serde(default = "default_detect")]
        detect: f64,
    },
    Governed {
        policy: PolicyKind,
        #[serde(default)]
        ablation: Ablation,
        /// Defaults to the gray-box target when empty.
        #[serde(default)]
        hub_set: BTreeSet<usize>,
        #[serde(default = "default_retry_cap")]
        retry_cap: usize,
        #[serde(default)]
        oracle: OracleConfig,
    },
}

impl DefenseConfig {
    pub fn governed(policy: PolicyKind) -> Self {
        DefenseConfig::Governed {
            policy,
            ablation: Ablation::Full,
            hub_set: BTreeSet::new(),
            retry_cap: DEFAULT_RETRY_CAP,
            oracle: OracleConfig::default(),
        }
    }

    /// Concrete defense; `hubs` fills an empty hub set.
    pub fn resolve(&self, hubs: &BTreeSet<usize>) -> Defense {
        match self {
            DefenseConfig::None => Defense::None,
            DefenseConfig::Reflection { detect } => Defense::Reflection { detect: *detect },
            DefenseConfig::Governed {
                policy,
                ablation,
                hub_set,
                retry_cap,
                oracle,
            } => {
                let hub_set = if hub_set.is_empty() { hubs.clone() } else { hub_set.clone() };
                Defense::Governed {
                    policy: GovernancePolicy {
                        kind: *policy,
                        hub_set,
                        retry_cap: *retry_cap,
                        oracle: *oracle,
                    },
                    ablation: *ablation,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactConfig {
    pub hub: usize,
    pub leaf: usize,
}

fn default_trials() -> usize {
    1
}

fn default_seeds() -> BTreeSet<usize> {
    BTreeSet::from([0])
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_w() -> usize {
    DEFAULT_WINDOW
}

/// Intervention times used when the config names none; those past the
/// horizon are dropped.
pub const DEFAULT_INTERVENTIONS: [usize; 3] = [2, 4, 6];

/// One experiment cell, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub topology: TopologyConfig,
    pub dynamics: DynamicsParams,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub horizon: usize,
    /// Seed set when there is no attack section.
    #[serde(default = "default_seeds")]
    pub seeds: BTreeSet<usize>,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub defense: Option<DefenseConfig>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_w")]
    pub w: usize,
    #[serde(default)]
    pub sink_policy: SinkPolicy,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub packaging: PackagingTable,
    #[serde(default)]
    pub interventions: Option<Vec<usize>>,
    #[serde(default)]
    pub impact: Option<ImpactConfig>,
}

impl ExperimentConfig {
    pub fn new(topology: TopologyConfig, dynamics: DynamicsParams, trials: usize, horizon: usize) -> Self {
        Self {
            name: None,
            topology,
            dynamics,
            trials,
            horizon,
            seeds: default_seeds(),
            attack: None,
            defense: None,
            tau: DEFAULT_TAU,
            w: DEFAULT_WINDOW,
            sink_policy: SinkPolicy::Auto,
            master_seed: 0,
            packaging: PackagingTable::default(),
            interventions: None,
            impact: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let cfg: Self = toml::from_str(&text).map_err(|source| HarnessError::Toml {
            path: path.into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.topology.kind.to_string())
    }

    /// Intervention times for the polluted-rounds table.
    pub fn intervention_times(&self) -> Vec<usize> {
        match &self.interventions {
            Some(ts) => ts.clone(),
            None => DEFAULT_INTERVENTIONS.into_iter().filter(|&t| t <= self.horizon).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.dynamics.validate()?;
        let n = self.topology.n;
        if self.trials == 0 {
            return Err(HarnessError::Invalid("trials must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(HarnessError::Invalid("horizon must be at least 1".into()));
        }
        if self.w == 0 {
            return Err(HarnessError::Invalid("w must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(cascade_core::Error::OutOfRange { name: "tau", value: self.tau }.into());
        }
        let bad = |what: &str, v: usize| HarnessError::Invalid(format!("{what} {v} is not an agent of an {n}-agent graph"));
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("seeds must not be empty".into()));
        }
        if let Some(&s) = self.seeds.iter().find(|&&s| s >= n) {
            return Err(bad("seed", s));
        }
        if let Some(AttackConfig {
            target: TargetSpec::Index(t),
            ..
        }) = &self.attack
        {
            if *t >= n {
                return Err(bad("attack target", *t));
            }
        }
        if let Some(DefenseConfig::Governed { hub_set, oracle, .. }) = &self.defense {
            if let Some(&h) = hub_set.iter().find(|&&h| h >= n) {
                return Err(bad("hub", h));
            }
            oracle.validate()?;
        }
        if let Some(DefenseConfig::Reflection { detect }) = &self.defense {
            if !(0.0..=1.0).contains(detect) {
                return Err(cascade_core::Error::OutOfRange { name: "detect", value: *detect }.into());
            }
        }
        if let SinkPolicy::Node(v) = self.sink_policy {
            if v >= n {
                return Err(bad("sink", v));
            }
        }
        if let Some(&t) = self.interventions.iter().flatten().find(|&&t| t > self.horizon) {
            return Err(HarnessError::Invalid(format!("intervention time {t} exceeds horizon {}", self.horizon)));
        }
        if let Some(ImpactConfig { hub, leaf }) = self.impact {
            if hub >= n || leaf >= n {
                return Err(bad("impact node", hub.max(leaf)));
            }
        }
        for name in [PolicyName::Compliance, PolicyName::SecurityFud] {
            self.packaging.policy(name).validate()?;
        }
        Ok(())
    }
}
