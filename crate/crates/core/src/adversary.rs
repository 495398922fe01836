//! Attack configuration: the false seed claim, its credibility packaging,
//! and where it is injected.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::governance::{Category, ClaimId};
use crate::graph::{spectral_summary, DirectedGraph, SpectralSummary, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::montecarlo::TrialTrace;
use crate::run::{RunConfig, Warning};

/// A false claim. Its falsehood is a matter of construction, so there is no
/// truth field: every seed claim is registered as false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedClaim {
    pub claim_id: ClaimId,
    #[serde(default)]
    pub category: Category,
    #[serde(default)]
    pub payload: String,
}

impl Default for SeedClaim {
    fn default() -> Self {
        Self {
            claim_id: ClaimId::new("m*"),
            category: Category::Factuality,
            payload: String::new(),
        }
    }
}

impl SeedClaim {
    pub fn new(claim_id: impl Into<String>, category: Category) -> Self {
        Self {
            claim_id: ClaimId(claim_id.into()),
            category,
            payload: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Baseline,
    Compliance,
    SecurityFud,
}

impl PolicyName {
    pub const ALL: [PolicyName; 3] = [PolicyName::Baseline, PolicyName::Compliance, PolicyName::SecurityFud];

    pub const fn as_str(self) -> &'static str {
        match self {
            PolicyName::Baseline => "baseline",
            PolicyName::Compliance => "compliance",
            PolicyName::SecurityFud => "security_fud",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPolicy(s.into()))
    }
}

/// Packaging modeled as a modulation of transmission and recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackPolicy {
    pub name: PolicyName,
    pub beta_multiplier: f64,
    pub delta_multiplier: f64,
}

impl AttackPolicy {
    pub const BASELINE: Self = Self {
        name: PolicyName::Baseline,
        beta_multiplier: 1.0,
        delta_multiplier: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_multiplier.is_finite() && self.beta_multiplier >= 0.0) {
            return Err(Error::OutOfRange {
                name: "beta_multiplier",
                value: self.beta_multiplier,
            });
        }
        if !(0.0..=1.0).contains(&self.delta_multiplier) {
            return Err(Error::OutOfRange {
                name: "delta_multiplier",
                value: self.delta_multiplier,
            });
        }
        let ok = match self.name {
            PolicyName::Baseline => self.beta_multiplier == 1.0 && self.delta_multiplier == 1.0,
            _ => self.beta_multiplier >= 1.0,
        };
        if !ok {
            return Err(Error::InvalidConfig(alloc::format!(
                "multipliers ({}, {}) are not allowed for {}",
                self.beta_multiplier,
                self.delta_multiplier,
                self.name
            )));
        }
        Ok(())
    }
}

/// Multipliers of the packaged policies.
///
/// The defaults are the mildest points of the harness packaging sweep
/// (`cascade attack --packaging`) at which baseline ASR trails both packaged
/// policies by at least 0.5 on the reference star, and security_fud saturates
/// an undefended complete graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackagingTable {
    pub compliance: (f64, f64),
    pub security_fud: (f64, f64),
}

impl Default for PackagingTable {
    fn default() -> Self {
        Self {
            compliance: (1.5, 0.25),
            security_fud: (1.5, 0.1),
        }
    }
}

impl PackagingTable {
    pub fn policy(&self, name: PolicyName) -> AttackPolicy {
        let (b, d) = match name {
            PolicyName::Baseline => (1.0, 1.0),
            PolicyName::Compliance => self.compliance,
            PolicyName::SecurityFud => self.security_fud,
        };
        AttackPolicy {
            name,
            beta_multiplier: b,
            delta_multiplier: d,
        }
    }
}

/// A seed bound to its packaging, before placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackagedSeed {
    pub seed: SeedClaim,
    pub policy: AttackPolicy,
}

pub fn package_seed(seed: SeedClaim, policy_name: &str, table: &PackagingTable) -> Result<PackagedSeed> {
    let policy = table.policy(policy_name.parse()?);
    policy.validate()?;
    Ok(PackagedSeed { seed, policy })
}

/// Injection is always at round 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub target: usize,
    pub time: usize,
    pub seed: SeedClaim,
    pub policy: AttackPolicy,
}

impl InjectionSpec {
    pub fn new(target: usize, packaged: PackagedSeed) -> Self {
        Self {
            target,
            time: 0,
            seed: packaged.seed,
            policy: packaged.policy,
        }
    }
}

fn lowest_max(scores: impl IntoIterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (v, s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((v, s));
        }
    }
    best.map(|(v, _)| v)
}

/// Node with maximal downstream reach, lowest index on ties.
pub fn max_reach_node(g: &DirectedGraph) -> usize {
    lowest_max((0..g.n()).map(|v| (v, g.downstream_reach(v).unwrap_or(0) as f64))).unwrap_or(0)
}

/// Entry of the dominant eigenvector with the largest weight; falls back to
/// downstream reach when there is no eigenvector (nilpotent graph, or the
/// spectral computation failed and `spec` is `None`).
pub fn select_target_graybox(spec: Option<&SpectralSummary>, g: &DirectedGraph) -> usize {
    spec.and_then(SpectralSummary::argmax).unwrap_or_else(|| max_reach_node(g))
}

/// Gray-box target computed from the graph with default spectral settings.
pub fn graybox_target(g: &DirectedGraph) -> usize {
    let spec = spectral_summary(g, DEFAULT_TOL, DEFAULT_MAX_ITER).ok();
    select_target_graybox(spec.as_ref(), g)
}

/// Influence inferred from observed traces only.
///
/// Each first activation of a node at `t >= 1` is credited to the nodes
/// active at `t - 1` (restricted to observed channels into it when
/// `channels` is given), split equally. The highest total wins; ties go to
/// nodes seen active at all, then to the lowest index.
pub fn select_target_blackbox(traces: &[TrialTrace], channels: Option<&DirectedGraph>) -> Result<usize> {
    let n = traces.first().ok_or(Error::EmptyTraces)?.n();
    let mut score = alloc::vec![0.0; n];
    let mut active = alloc::vec![false; n];
    for tr in traces {
        if tr.n() != n {
            return Err(Error::ShapeMismatch {
                expected_n: n,
                expected_rounds: tr.horizon(),
                n: tr.n(),
                rounds: tr.horizon(),
            });
        }
        for row in &tr.states {
            for (a, &x) in active.iter_mut().zip(row) {
                *a |= x;
            }
        }
        for i in 0..n {
            let Some(t) = tr.first_activation(i).filter(|&t| t >= 1) else {
                continue;
            };
            let prev = &tr.states[t - 1];
            let creditors: Vec<usize> = (0..n)
                .filter(|&j| j != i && prev[j])
                .filter(|&j| channels.is_none_or(|g| g.n() == n && g.a(i, j)))
                .collect();
            let w = 1.0 / creditors.len().max(1) as f64;
            for j in creditors {
                score[j] += w;
            }
        }
    }
    let mut best = 0;
    for v in 1..n {
        if (score[v], active[v]) > (score[best], active[best]) {
            best = v;
        }
    }
    Ok(best)
}

/// Places the packaged seed: the run is seeded at the target only, with
/// `beta` scaled (clamped to 1, with a warning) and `delta` scaled.
pub fn inject(mut cfg: RunConfig, spec: &InjectionSpec) -> Result<RunConfig> {
    cfg.graph.check(spec.target)?;
    if spec.time != 0 {
        return Err(Error::InvalidConfig("injection time must be round 0".into()));
    }
    spec.policy.validate()?;
    let requested = cfg.params.beta * spec.policy.beta_multiplier;
    if requested > 1.0 {
        cfg.warnings.push(Warning::BetaClamped { requested });
    }
    cfg.params.beta = requested.min(1.0);
    cfg.params.delta *= spec.policy.delta_multiplier;
    cfg.seeds = BTreeSet::from([spec.target]);
    cfg.seed_claim = Some(spec.seed.clone());
    cfg.params.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DynamicsParams;
    use crate::graph::{make_chain, make_complete, make_star};

    fn trace(rows: &[&[u8]]) -> TrialTrace {
        TrialTrace {
            states: rows.iter().map(|r| r.iter().map(|&x| x == 1).collect()).collect(),
            seed_nodes: BTreeSet::new(),
            rng_seed: 0,
            stopped_at: None,
        }
    }

    #[test]
    fn graybox_examples() {
        assert_eq!(graybox_target(&make_star(5).unwrap()), 0);
        assert_eq!(graybox_target(&make_chain(5).unwrap()), 0);
        assert_eq!(graybox_target(&make_complete(5).unwrap()), 0);
        assert_eq!(select_target_graybox(None, &make_chain(4).unwrap()), 0);
    }

    #[test]
    fn blackbox_star_hub() {
        let t = [
            trace(&[&[1, 0, 0, 0], &[1, 1, 0, 1], &[1, 1, 1, 1]]),
            trace(&[&[1, 0, 0, 0], &[1, 0, 1, 0], &[0, 0, 1, 0]]),
        ];
        assert_eq!(select_target_blackbox(&t, Some(&make_star(4).unwrap())).unwrap(), 0);
    }

    #[test]
    fn blackbox_precedence() {
        let t = [
            trace(&[&[0, 0, 1, 0], &[1, 0, 1, 0], &[1, 1, 1, 1]]),
            trace(&[&[0, 0, 1, 0], &[0, 0, 1, 1], &[0, 0, 0, 1]]),
        ];
        assert_eq!(select_target_blackbox(&t, None).unwrap(), 2);
    }

    #[test]
    fn blackbox_without_events_picks_lowest_active() {
        let t = [trace(&[&[0, 0, 1, 1], &[0, 0, 1, 0]])];
        assert_eq!(select_target_blackbox(&t, None).unwrap(), 2);
        assert_eq!(select_target_blackbox(&[], None), Err(Error::EmptyTraces));
    }

    #[test]
    fn packaging() {
        let table = PackagingTable::default();
        let p = package_seed(SeedClaim::default(), "baseline", &table).unwrap();
        assert_eq!(p.policy, AttackPolicy::BASELINE);
        for name in PolicyName::ALL {
            table.policy(name).validate().unwrap();
        }
        assert_eq!(
            package_seed(SeedClaim::default(), "viral", &table),
            Err(Error::UnknownPolicy("viral".into()))
        );
        let bad = AttackPolicy {
            name: PolicyName::Compliance,
            beta_multiplier: 0.5,
            delta_multiplier: 0.5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn injection_clamps_and_seeds() {
        let g = make_star(5).unwrap();
        let cfg = RunConfig::new(g, DynamicsParams::product(0.5, 0.4).unwrap(), [3].into(), 5).unwrap();
        let spec = InjectionSpec {
            target: 0,
            time: 0,
            seed: SeedClaim::new("fake", Category::Faithfulness),
            policy: AttackPolicy {
                name: PolicyName::SecurityFud,
                beta_multiplier: 3.0,
                delta_multiplier: 0.5,
            },
        };
        let out = inject(cfg.clone(), &spec).unwrap();
        assert_eq!(out.params.beta, 1.0);
        assert!((out.params.delta - 0.2).abs() < 1e-15);
        assert_eq!(out.seeds, BTreeSet::from([0]));
        assert_eq!(out.warnings, [Warning::BetaClamped { requested: 1.5 }]);
        assert_eq!(out.tracked_claim().claim_id.as_str(), "fake");
        let far = InjectionSpec { target: 5, ..spec };
        assert_eq!(inject(cfg, &far), Err(Error::IndexOutOfRange { index: 5, n: 5 }));
    }
}
