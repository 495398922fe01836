use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::claim::{AtomicClaim, ClaimId, Label, MessageClaim, RawMessage, RiskTag};
use super::lineage::{evidence_for, update_lineage, LineageDelta, LineageGraph};
use super::oracle::{
    decompose, route, screen, verify, ClaimRegistry, ComplianceResubmitter, Decomposer, EntailmentOracle,
    NoisyEntailment, NoisyVerifier, OracleConfig, ResubmitOracle, Route, VerifierOracle,
};
use super::trace::{Action, TraceRecord};
use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};

pub const DEFAULT_RETRY_CAP: usize = 2;
pub const REWRITE_DIRECTIVE: &str = "rewrite_without_rejected";

/// Operating point. `LowIntervention` is the one evaluated under the name
/// "speed", which is accepted as an alias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[serde(alias = "speed")]
    LowIntervention,
    Balanced,
    Strict,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::LowIntervention, PolicyKind::Balanced, PolicyKind::Strict];

    pub const fn as_str(self) -> &'static str {
        match self {
            PolicyKind::LowIntervention => "low_intervention",
            PolicyKind::Balanced => "balanced",
            PolicyKind::Strict => "strict",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_intervention" | "speed" => Ok(PolicyKind::LowIntervention),
            "balanced" => Ok(PolicyKind::Balanced),
            "strict" => Ok(PolicyKind::Strict),
            _ => Err(Error::UnknownPolicy(s.into())),
        }
    }
}

fn default_retry_cap() -> usize {
    DEFAULT_RETRY_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernancePolicy {
    #[serde(rename = "name")]
    pub kind: PolicyKind,
    /// Senders whose yellow atoms are verified under `Balanced`.
    #[serde(default)]
    pub hub_set: BTreeSet<usize>,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: usize,
    #[serde(default, rename = "oracle_config")]
    pub oracle: OracleConfig,
}

impl GovernancePolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            hub_set: BTreeSet::new(),
            retry_cap: DEFAULT_RETRY_CAP,
            oracle: OracleConfig::default(),
        }
    }

    pub fn with_oracle(mut self, oracle: OracleConfig) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn with_hubs(mut self, hubs: impl IntoIterator<Item = usize>) -> Self {
        self.hub_set = hubs.into_iter().collect();
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(&h) = self.hub_set.iter().find(|&&h| h >= n) {
            return Err(Error::IndexOutOfRange { index: h, n });
        }
        self.oracle.validate()
    }
}

/// Component switched off in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Whole message judged as one atom.
    NoAtomization,
    /// Every atom is forwarded as yellow without screening.
    NoDetection,
    /// Detection and verification run, but everything is released.
    NoBlocking,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoAtomization,
        Ablation::NoDetection,
        Ablation::NoBlocking,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoAtomization => "no_atomization",
            Ablation::NoDetection => "no_detection",
            Ablation::NoBlocking => "no_blocking",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown ablation {s}")))
    }
}

/// A message after labeling; atoms keep their input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GovernedMessage {
    pub sender: usize,
    pub round: usize,
    pub atoms: Vec<AtomicClaim>,
    /// Claims the decomposer missed; they are delivered unscreened.
    pub missed: Vec<MessageClaim>,
}

impl GovernedMessage {
    pub fn carries(&self, claim: &ClaimId) -> bool {
        self.atoms.iter().any(|a| a.contains(claim)) || self.missed.iter().any(|c| &c.id == claim)
    }

    pub fn red(&self) -> impl Iterator<Item = &AtomicClaim> {
        self.atoms.iter().filter(|a| a.label() == Label::Red)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackPackage {
    pub rejected: Vec<AtomicClaim>,
    pub evidence: Vec<ClaimId>,
    pub directive: String,
    pub retry_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuationOutcome {
    /// What the receivers get.
    pub message: GovernedMessage,
    /// Processing passes used, between 1 and `retry_cap + 1`.
    pub passes: usize,
    pub breaker: bool,
    /// Red atoms kept out of the message, first rejection first.
    pub rejected: Vec<AtomicClaim>,
    /// Claims the sender removed while rewriting.
    pub dropped: BTreeSet<ClaimId>,
    pub delta: LineageDelta,
}

/// Interceptor for one run: owns the run's lineage (single writer), the
/// oracles, and the trace log.
pub struct Governor {
    policy: GovernancePolicy,
    ablation: Ablation,
    registry: ClaimRegistry,
    lineage: LineageGraph,
    decomposer: Decomposer,
    decomposer_rng: ChaCha8Rng,
    entailment: Box<dyn EntailmentOracle>,
    verifier: Box<dyn VerifierOracle>,
    resubmitter: Box<dyn ResubmitOracle>,
    trace: Vec<TraceRecord>,
}

impl fmt::Debug for Governor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Governor")
            .field("policy", &self.policy)
            .field("ablation", &self.ablation)
            .field("lineage_nodes", &self.lineage.len())
            .field("trace_records", &self.trace.len())
            .finish()
    }
}

impl Governor {
    /// Governor with simulated oracles; each oracle draws from its own stream
    /// of `seed`, so switching a component off never shifts the others.
    pub fn simulated(policy: GovernancePolicy, ablation: Ablation, registry: ClaimRegistry, seed: u64) -> Result<Self> {
        let o = policy.oracle;
        let s = |k| rng::stream(seed, rng::ORACLE_STREAM + k);
        Self::with_oracles(
            policy,
            ablation,
            registry,
            Box::new(NoisyEntailment::new(o.screening, s(0))),
            Box::new(NoisyVerifier::new(o.verifier, s(1))),
            Box::new(ComplianceResubmitter::new(o.compliance, s(2))),
            s(3),
        )
    }

    pub fn with_oracles(
        policy: GovernancePolicy,
        ablation: Ablation,
        registry: ClaimRegistry,
        entailment: Box<dyn EntailmentOracle>,
        verifier: Box<dyn VerifierOracle>,
        resubmitter: Box<dyn ResubmitOracle>,
        decomposer_rng: ChaCha8Rng,
    ) -> Result<Self> {
        policy.oracle.validate()?;
        let decomposer = match ablation {
            Ablation::NoAtomization => Decomposer::Whole,
            _ if policy.oracle.decomposer_miss > 0.0 => Decomposer::Lossy {
                miss_rate: policy.oracle.decomposer_miss,
            },
            _ => Decomposer::Identity,
        };
        Ok(Self {
            lineage: LineageGraph::anchored(&registry),
            policy,
            ablation,
            registry,
            decomposer,
            decomposer_rng,
            entailment,
            verifier,
            resubmitter,
            trace: Vec::new(),
        })
    }

    pub fn policy(&self) -> &GovernancePolicy {
        &self.policy
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn registry(&self) -> &ClaimRegistry {
        &self.registry
    }

    pub fn lineage(&self) -> &LineageGraph {
        &self.lineage
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn into_parts(self) -> (LineageGraph, Vec<TraceRecord>) {
        (self.lineage, self.trace)
    }

    /// Decomposition, screening, routing, and verification of one pass.
    pub fn label(&mut self, msg: &RawMessage) -> Result<GovernedMessage> {
        let d = decompose(msg, self.decomposer, &mut self.decomposer_rng);
        let mut atoms = d.atoms;
        for atom in &mut atoms {
            if self.ablation == Ablation::NoDetection {
                atom.hold(RiskTag::Uncertain);
                continue;
            }
            match screen(atom, self.lineage.confirmed_view(), &mut *self.entailment, &self.registry) {
                Label::Green => atom.confirm(),
                Label::Red => atom.reject(),
                Label::Yellow => {
                    atom.hold(RiskTag::Uncertain);
                    if route(atom, &self.policy, msg.sender)? == Route::Verify {
                        verify(atom, &mut *self.verifier, &self.registry);
                    }
                }
            }
        }
        Ok(GovernedMessage {
            sender: msg.sender,
            round: msg.round,
            atoms,
            missed: d.missed,
        })
    }

    fn record(&mut self, attempt: usize, claims: &[MessageClaim], gm: &GovernedMessage, receivers: &[usize], action: Action, delta: LineageDelta) {
        let mut labels = Vec::with_capacity(claims.len());
        let mut atom_of = Vec::new();
        let composite = gm.atoms.iter().any(|a| a.is_composite());
        for c in claims {
            match gm.atoms.iter().position(|a| a.contains(&c.id)) {
                Some(k) => {
                    labels.push(Some(gm.atoms[k].label()));
                    atom_of.push(k);
                }
                None => {
                    labels.push(None);
                    atom_of.push(usize::MAX);
                }
            }
        }
        if !composite {
            atom_of.clear();
        }
        self.trace.push(TraceRecord {
            round: gm.round,
            sender: gm.sender,
            receivers: receivers.to_vec(),
            attempt,
            claim_ids: claims.iter().map(|c| c.id.clone()).collect(),
            atom_of,
            labels: Some(labels),
            action,
            lineage_delta: delta,
        });
    }

    /// Runs a message through labeling and actuation: release when nothing is
    /// red, otherwise block with feedback and re-process the sender's rewrite,
    /// at most `retry_cap` times, then trip the circuit breaker.
    pub fn process(&mut self, msg: RawMessage, receivers: &[usize]) -> Result<ActuationOutcome> {
        let k = self.policy.retry_cap;
        let mut pending = msg.claims;
        let mut rejected: Vec<AtomicClaim> = Vec::new();
        let mut dropped = BTreeSet::new();
        for attempt in 0..=k {
            let raw = RawMessage {
                sender: msg.sender,
                round: msg.round,
                claims: pending.clone(),
            };
            let mut gm = self.label(&raw)?;
            let red: Vec<AtomicClaim> = gm.red().cloned().collect();
            if red.is_empty() || self.ablation == Ablation::NoBlocking {
                let delta = update_lineage(&mut self.lineage, &gm.atoms, &rejected, &self.registry)?;
                self.record(attempt, &pending, &gm, receivers, Action::Release, delta.clone());
                return Ok(ActuationOutcome {
                    message: gm,
                    passes: attempt + 1,
                    breaker: false,
                    rejected,
                    dropped,
                    delta,
                });
            }
            for a in &red {
                if !rejected.iter().any(|r| r.claim_id == a.claim_id) {
                    rejected.push(a.clone());
                }
            }
            if attempt == k {
                let labeled = gm.clone();
                gm.atoms.retain(|a| a.label() != Label::Red);
                for a in gm.atoms.iter_mut().filter(|a| a.label() == Label::Yellow) {
                    a.hold(RiskTag::HighRisk);
                }
                let delta = update_lineage(&mut self.lineage, &gm.atoms, &rejected, &self.registry)?;
                self.record(attempt, &pending, &labeled, receivers, Action::Breaker, delta.clone());
                return Ok(ActuationOutcome {
                    message: gm,
                    passes: attempt + 1,
                    breaker: true,
                    rejected,
                    dropped,
                    delta,
                });
            }
            let feedback = FeedbackPackage {
                evidence: red.iter().map(|a| evidence_for(a, &self.registry, &self.lineage)).collect(),
                rejected: red,
                directive: REWRITE_DIRECTIVE.into(),
                retry_count: attempt + 1,
            };
            let action = if attempt == 0 { Action::Block } else { Action::Retry };
            self.record(attempt, &pending, &gm, receivers, action, LineageDelta::default());
            if let Some(next) = self.resubmitter.resubmit(&pending, &feedback) {
                for c in &pending {
                    if !next.iter().any(|n| n.id == c.id) {
                        dropped.insert(c.id.clone());
                    }
                }
                pending = next;
            }
        }
        unreachable!("the last pass always releases or trips the breaker")
    }
}

/// Actuation of one message through `gov`; see [`Governor::process`].
pub fn actuate(gov: &mut Governor, msg: RawMessage, receivers: &[usize]) -> Result<ActuationOutcome> {
    gov.process(msg, receivers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::governance::claim::{Category, Status};
    use crate::governance::oracle::{ScreeningNoise, Verdict, VerifierConfig};
    use crate::governance::ConfirmedView;

    struct Scripted {
        comply: bool,
        calls: usize,
    }

    impl ResubmitOracle for Scripted {
        fn resubmit(&mut self, pending: &[MessageClaim], fb: &FeedbackPackage) -> Option<Vec<MessageClaim>> {
            self.calls += 1;
            assert!(!fb.rejected.is_empty());
            assert_eq!(fb.directive, REWRITE_DIRECTIVE);
            if !self.comply {
                return Some(pending.to_vec());
            }
            Some(pending.iter().filter(|c| !fb.rejected.iter().any(|r| r.contains(&c.id))).cloned().collect())
        }
    }

    struct Failing;

    impl ResubmitOracle for Failing {
        fn resubmit(&mut self, _: &[MessageClaim], _: &FeedbackPackage) -> Option<Vec<MessageClaim>> {
            None
        }
    }

    fn registry() -> ClaimRegistry {
        let mut r = ClaimRegistry::with_reference(2);
        r.add_falsehood("m*".into(), Some("ref:0".into()), Category::Factuality).unwrap();
        r
    }

    fn msg(claims: &[&str]) -> RawMessage {
        RawMessage {
            sender: 0,
            round: 1,
            claims: claims
                .iter()
                .map(|c| MessageClaim {
                    id: (*c).into(),
                    category: Category::Factuality,
                })
                .collect(),
        }
    }

    fn governor(kind: PolicyKind, resubmit: Box<dyn ResubmitOracle>) -> Governor {
        let policy = GovernancePolicy::new(kind).with_oracle(OracleConfig::PERFECT);
        Governor::with_oracles(
            policy,
            Ablation::Full,
            registry(),
            Box::new(NoisyEntailment::new(ScreeningNoise::PERFECT, rng::stream(1, 1))),
            Box::new(NoisyVerifier::new(VerifierConfig::PERFECT, rng::stream(1, 2))),
            resubmit,
            rng::stream(1, 4),
        )
        .unwrap()
    }

    fn ids(gm: &GovernedMessage) -> Vec<&str> {
        gm.atoms.iter().map(|a| a.claim_id.as_str()).collect()
    }

    #[test]
    fn all_green_is_released_unchanged() {
        let mut g = governor(PolicyKind::Strict, Box::new(Scripted { comply: true, calls: 0 }));
        let out = g.process(msg(&["ref:0", "ref:1"]), &[1]).unwrap();
        assert_eq!(ids(&out.message), ["ref:0", "ref:1"]);
        assert_eq!(out.passes, 1);
        assert!(out.message.atoms.iter().all(|a| a.status() == Status::Confirmed));
        assert_eq!(g.trace().len(), 1);
        assert_eq!(g.trace()[0].action, Action::Release);
    }

    #[test]
    fn compliant_sender_released_on_first_retry() {
        let mut g = governor(PolicyKind::Strict, Box::new(Scripted { comply: true, calls: 0 }));
        let out = g.process(msg(&["ref:1", "m*", "obs:0:1"]), &[1, 2]).unwrap();
        assert_eq!(out.passes, 2);
        assert!(!out.breaker);
        assert_eq!(ids(&out.message), ["ref:1", "obs:0:1"]);
        assert!(out.dropped.contains(&"m*".into()));
        let actions: Vec<_> = g.trace().iter().map(|r| r.action).collect();
        assert_eq!(actions, [Action::Block, Action::Release]);
        assert_eq!(g.trace()[1].attempt, 1);
    }

    #[test]
    fn stubborn_sender_hits_breaker() {
        let mut g = governor(PolicyKind::Strict, Box::new(Scripted { comply: false, calls: 0 }));
        let out = g.process(msg(&["m*", "obs:0:1"]), &[1]).unwrap();
        assert!(out.breaker);
        assert_eq!(out.passes, DEFAULT_RETRY_CAP + 1);
        assert!(!out.message.carries(&"m*".into()));
        assert_eq!(ids(&out.message), ["obs:0:1"]);
        let actions: Vec<_> = g.trace().iter().map(|r| r.action).collect();
        assert_eq!(actions, [Action::Block, Action::Retry, Action::Breaker]);
        assert_eq!(out.rejected.len(), 1);
    }

    #[test]
    fn failing_resubmission_counts_against_cap() {
        let mut g = governor(PolicyKind::Strict, Box::new(Failing));
        let out = g.process(msg(&["m*"]), &[]).unwrap();
        assert!(out.breaker);
        assert!(out.message.atoms.is_empty());
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn breaker_tags_yellow_atoms_high_risk() {
        let mut g = governor(PolicyKind::LowIntervention, Box::new(Scripted { comply: false, calls: 0 }));
        let out = g.process(msg(&["m*", "novel"]), &[]).unwrap();
        assert!(out.breaker);
        let a = &out.message.atoms[0];
        assert_eq!((a.label(), a.risk_tag()), (Label::Yellow, Some(RiskTag::HighRisk)));
        assert!(!g.lineage().confirmed_view().entails(&"novel".into()));
    }

    #[test]
    fn zero_retry_cap_goes_straight_to_breaker() {
        let mut g = governor(PolicyKind::Strict, Box::new(Scripted { comply: true, calls: 0 }));
        g.policy.retry_cap = 0;
        let out = g.process(msg(&["m*"]), &[]).unwrap();
        assert_eq!((out.passes, out.breaker), (1, true));
    }

    #[test]
    fn empty_message_passes_through() {
        let mut g = governor(PolicyKind::Strict, Box::new(Failing));
        let out = g.process(msg(&[]), &[1]).unwrap();
        assert_eq!(out.passes, 1);
        assert!(out.message.atoms.is_empty());
    }

    #[test]
    fn strict_verification_confirms_benign_claims() {
        let mut g = governor(PolicyKind::Strict, Box::new(Failing));
        g.process(msg(&["obs:0:1"]), &[]).unwrap();
        assert!(g.lineage().confirmed_view().entails(&"obs:0:1".into()));
        let mut low = governor(PolicyKind::LowIntervention, Box::new(Failing));
        low.process(msg(&["obs:0:1"]), &[]).unwrap();
        assert!(!low.lineage().confirmed_view().entails(&"obs:0:1".into()));
    }

    #[test]
    fn no_blocking_releases_red() {
        let policy = GovernancePolicy::new(PolicyKind::Strict).with_oracle(OracleConfig::PERFECT);
        let mut g = Governor::simulated(policy, Ablation::NoBlocking, registry(), 3).unwrap();
        let out = g.process(msg(&["m*"]), &[]).unwrap();
        assert!(out.message.carries(&"m*".into()));
        assert_eq!(out.message.atoms[0].label(), Label::Red);
    }

    #[test]
    fn no_detection_forwards_everything_yellow() {
        let policy = GovernancePolicy::new(PolicyKind::Strict).with_oracle(OracleConfig::PERFECT);
        let mut g = Governor::simulated(policy, Ablation::NoDetection, registry(), 3).unwrap();
        let out = g.process(msg(&["ref:0", "m*"]), &[]).unwrap();
        assert!(out.message.atoms.iter().all(|a| a.label() == Label::Yellow));
        assert_eq!(out.passes, 1);
    }

    #[test]
    fn no_atomization_wraps_the_message() {
        let policy = GovernancePolicy::new(PolicyKind::Strict).with_oracle(OracleConfig::PERFECT);
        let mut g = Governor::simulated(policy, Ablation::NoAtomization, registry(), 3).unwrap();
        let out = g.process(msg(&["ref:0", "obs:0:1"]), &[]).unwrap();
        assert_eq!(out.message.atoms.len(), 1);
        assert_eq!(g.trace()[0].atom_of, [0, 0]);
    }

    struct AlwaysGreen;

    impl EntailmentOracle for AlwaysGreen {
        fn judge(&mut self, _: &AtomicClaim, _: ConfirmedView<'_>, _: &ClaimRegistry) -> Label {
            Label::Green
        }
    }

    struct Never;

    impl VerifierOracle for Never {
        fn verify(&mut self, _: &AtomicClaim, _: &ClaimRegistry) -> Verdict {
            Verdict::Unresolved
        }
    }

    #[test]
    fn pluggable_oracles() {
        let mut g = Governor::with_oracles(
            GovernancePolicy::new(PolicyKind::Strict),
            Ablation::Full,
            registry(),
            Box::new(AlwaysGreen),
            Box::new(Never),
            Box::new(Failing),
            rng::stream(0, 0),
        )
        .unwrap();
        let out = g.process(msg(&["m*"]), &[]).unwrap();
        assert!(out.message.carries(&"m*".into()));
        assert!(g.lineage().confirmed_view().entails(&"m*".into()));
    }

    #[test]
    fn policy_parsing_and_validation() {
        assert_eq!("speed".parse::<PolicyKind>().unwrap(), PolicyKind::LowIntervention);
        assert_eq!("fast".parse::<PolicyKind>(), Err(Error::UnknownPolicy("fast".into())));
        assert_eq!("no_blocking".parse::<Ablation>().unwrap(), Ablation::NoBlocking);
        let p = GovernancePolicy::new(PolicyKind::Balanced).with_hubs([7]);
        assert_eq!(p.validate(5), Err(Error::IndexOutOfRange { index: 7, n: 5 }));
    }
}
