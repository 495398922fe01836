use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::claim::{AtomicClaim, Category, ClaimId, Label, MessageClaim, RawMessage, RiskTag, Source};
use super::lineage::ConfirmedView;
use super::pipeline::{FeedbackPackage, GovernancePolicy, PolicyKind};
use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};

/// Ground truth for the simulated oracles: trusted reference facts and the
/// known falsehoods, each optionally registered as the negation of a fact.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRegistry {
    reference: Vec<MessageClaim>,
    falsehoods: BTreeSet<ClaimId>,
    negations: BTreeMap<ClaimId, ClaimId>,
    categories: BTreeMap<ClaimId, Category>,
}

impl ClaimRegistry {
    /// Registry with reference facts `ref:0 .. ref:{k-1}`.
    pub fn with_reference(k: usize) -> Self {
        let mut r = Self::default();
        for i in 0..k {
            r.add_reference(ClaimId(format!("ref:{i}")), Category::Faithfulness);
        }
        r
    }

    pub fn add_reference(&mut self, id: ClaimId, category: Category) {
        self.categories.insert(id.clone(), category);
        if !self.reference.iter().any(|c| c.id == id) {
            self.reference.push(MessageClaim { id, category });
        }
    }

    /// Registers a false claim. A falsehood may not also be a reference fact.
    pub fn add_falsehood(&mut self, id: ClaimId, negates: Option<ClaimId>, category: Category) -> Result<()> {
        if self.reference.iter().any(|c| c.id == id) {
            return Err(Error::InvalidConfig(format!("claim {id} is both reference and false")));
        }
        self.categories.insert(id.clone(), category);
        if let Some(n) = negates {
            self.negations.insert(id.clone(), n);
        }
        self.falsehoods.insert(id);
        Ok(())
    }

    pub fn reference(&self) -> &[MessageClaim] {
        &self.reference
    }

    pub fn is_false(&self, id: &ClaimId) -> bool {
        self.falsehoods.contains(id)
    }

    pub fn negation_of(&self, id: &ClaimId) -> Option<&ClaimId> {
        self.negations.get(id)
    }

    pub fn category(&self, id: &ClaimId) -> Category {
        self.categories.get(id).copied().unwrap_or_default()
    }

    /// Noise-free screening verdict: entailed, contradicting, or neither.
    pub fn truth_label(&self, claim: &ClaimId, view: ConfirmedView<'_>) -> Label {
        if view.entails(claim) {
            Label::Green
        } else if self.negation_of(claim).is_some_and(|n| view.entails(n)) || view.refutation(claim).is_some() {
            Label::Red
        } else {
            Label::Yellow
        }
    }
}

/// How raw messages become atoms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Decomposer {
    /// Messages are born structured: one atom per claim, in order.
    #[default]
    Identity,
    /// Whole message as a single composite atom.
    Whole,
    /// Each claim is missed (passed through unscreened) with this probability.
    Lossy { miss_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub atoms: Vec<AtomicClaim>,
    /// Claims the decomposer failed to extract; they travel unscreened.
    pub missed: Vec<MessageClaim>,
}

/// Id of the composite atom wrapping a whole message.
pub(crate) fn composite_id(sender: usize, round: usize) -> ClaimId {
    ClaimId(format!("msg:{sender}:{round}"))
}

pub fn decompose(msg: &RawMessage, decomposer: Decomposer, rng: &mut ChaCha8Rng) -> Decomposition {
    let src = Source::Agent(msg.sender);
    let single = |i: usize, c: &MessageClaim| AtomicClaim::new(i, c.id.clone(), c.category, src, msg.round);
    match decomposer {
        Decomposer::Identity => Decomposition {
            atoms: msg.claims.iter().enumerate().map(|(i, c)| single(i, c)).collect(),
            missed: Vec::new(),
        },
        Decomposer::Whole if msg.claims.is_empty() => Decomposition {
            atoms: Vec::new(),
            missed: Vec::new(),
        },
        Decomposer::Whole => {
            let parts = msg.claims.iter().map(|c| c.id.clone()).collect();
            Decomposition {
                atoms: alloc::vec![AtomicClaim::composite(
                    0,
                    composite_id(msg.sender, msg.round),
                    parts,
                    src,
                    msg.round
                )],
                missed: Vec::new(),
            }
        }
        Decomposer::Lossy { miss_rate } => {
            let mut d = Decomposition {
                atoms: Vec::new(),
                missed: Vec::new(),
            };
            for (i, c) in msg.claims.iter().enumerate() {
                if rng::bernoulli(rng, miss_rate) {
                    d.missed.push(c.clone());
                } else {
                    d.atoms.push(single(i, c));
                }
            }
            d
        }
    }
}

/// Labels an atom against the trusted part of the lineage.
pub trait EntailmentOracle {
    fn judge(&mut self, atom: &AtomicClaim, view: ConfirmedView<'_>, registry: &ClaimRegistry) -> Label;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    VerifiedTrue,
    VerifiedFalse,
    Unresolved,
}

pub trait VerifierOracle {
    fn verify(&mut self, atom: &AtomicClaim, registry: &ClaimRegistry) -> Verdict;
}

/// Produces the sender's rewrite after a block. `None` means the sender
/// failed to answer; the original message is then retried unchanged.
pub trait ResubmitOracle {
    fn resubmit(&mut self, pending: &[MessageClaim], feedback: &FeedbackPackage) -> Option<Vec<MessageClaim>>;
}

/// Screening error rates. `missed_contradiction` turns a true red into yellow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningNoise {
    pub false_green: f64,
    pub false_red: f64,
    pub missed_contradiction: f64,
}

impl ScreeningNoise {
    pub const PERFECT: Self = Self {
        false_green: 0.0,
        false_red: 0.0,
        missed_contradiction: 0.0,
    };
}

impl Default for ScreeningNoise {
    fn default() -> Self {
        Self {
            false_green: 0.01,
            false_red: 0.02,
            missed_contradiction: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    pub accuracy: f64,
    pub unresolved: f64,
}

impl VerifierConfig {
    pub const PERFECT: Self = Self {
        accuracy: 1.0,
        unresolved: 0.0,
    };
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            accuracy: 0.95,
            unresolved: 0.05,
        }
    }
}

/// Error rates of every simulated oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub screening: ScreeningNoise,
    pub verifier: VerifierConfig,
    /// Probability that a blocked sender drops each rejected atom.
    pub compliance: f64,
    /// Per-claim miss rate of the decomposer (0 means identity).
    pub decomposer_miss: f64,
}

impl OracleConfig {
    pub const PERFECT: Self = Self {
        screening: ScreeningNoise::PERFECT,
        verifier: VerifierConfig::PERFECT,
        compliance: 1.0,
        decomposer_miss: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let s = &self.screening;
        let probs = [
            ("false_green", s.false_green),
            ("false_red", s.false_red),
            ("missed_contradiction", s.missed_contradiction),
            ("accuracy", self.verifier.accuracy),
            ("unresolved", self.verifier.unresolved),
            ("compliance", self.compliance),
            ("decomposer_miss", self.decomposer_miss),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange { name, value });
            }
        }
        if s.false_green + s.missed_contradiction > 1.0 {
            return Err(Error::OutOfRange {
                name: "false_green + missed_contradiction",
                value: s.false_green + s.missed_contradiction,
            });
        }
        if s.false_green + s.false_red > 1.0 {
            return Err(Error::OutOfRange {
                name: "false_green + false_red",
                value: s.false_green + s.false_red,
            });
        }
        Ok(())
    }
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            screening: ScreeningNoise::default(),
            verifier: VerifierConfig::default(),
            compliance: 0.3,
            decomposer_miss: 0.0,
        }
    }
}

/// Registry lookup with injected errors. A composite atom is judged by one
/// uniformly sampled constituent, so a single false claim gets diluted.
#[derive(Debug, Clone)]
pub struct NoisyEntailment {
    pub noise: ScreeningNoise,
    rng: ChaCha8Rng,
}

impl NoisyEntailment {
    pub fn new(noise: ScreeningNoise, rng: ChaCha8Rng) -> Self {
        Self { noise, rng }
    }
}

fn judged_part<'a>(atom: &'a AtomicClaim, rng: &mut ChaCha8Rng) -> &'a ClaimId {
    if atom.is_composite() && !atom.parts.is_empty() {
        &atom.parts[rng::pick(rng, atom.parts.len())]
    } else {
        &atom.claim_id
    }
}

impl EntailmentOracle for NoisyEntailment {
    fn judge(&mut self, atom: &AtomicClaim, view: ConfirmedView<'_>, registry: &ClaimRegistry) -> Label {
        let claim = judged_part(atom, &mut self.rng);
        let truth = registry.truth_label(claim, view);
        let u: f64 = rand::Rng::random(&mut self.rng);
        let n = &self.noise;
        match truth {
            Label::Red if u < n.false_green => Label::Green,
            Label::Red if u < n.false_green + n.missed_contradiction => Label::Yellow,
            Label::Yellow if u < n.false_green => Label::Green,
            Label::Yellow if u < n.false_green + n.false_red => Label::Red,
            Label::Green if u < n.false_red => Label::Red,
            l => l,
        }
    }
}

/// Registry lookup that is unresolved with probability `unresolved` and
/// otherwise correct with probability `accuracy`.
#[derive(Debug, Clone)]
pub struct NoisyVerifier {
    pub config: VerifierConfig,
    rng: ChaCha8Rng,
}

impl NoisyVerifier {
    pub fn new(config: VerifierConfig, rng: ChaCha8Rng) -> Self {
        Self { config, rng }
    }
}

impl VerifierOracle for NoisyVerifier {
    fn verify(&mut self, atom: &AtomicClaim, registry: &ClaimRegistry) -> Verdict {
        let claim = judged_part(atom, &mut self.rng);
        let unresolved = rng::bernoulli(&mut self.rng, self.config.unresolved);
        let correct = rng::bernoulli(&mut self.rng, self.config.accuracy);
        if unresolved {
            return Verdict::Unresolved;
        }
        match (registry.is_false(claim), correct) {
            (true, true) | (false, false) => Verdict::VerifiedFalse,
            _ => Verdict::VerifiedTrue,
        }
    }
}

/// Sender that removes each rejected atom's claims with probability `p`.
#[derive(Debug, Clone)]
pub struct ComplianceResubmitter {
    pub p: f64,
    rng: ChaCha8Rng,
}

impl ComplianceResubmitter {
    pub fn new(p: f64, rng: ChaCha8Rng) -> Self {
        Self { p, rng }
    }
}

impl ResubmitOracle for ComplianceResubmitter {
    fn resubmit(&mut self, pending: &[MessageClaim], feedback: &FeedbackPackage) -> Option<Vec<MessageClaim>> {
        let mut drop = BTreeSet::new();
        for atom in &feedback.rejected {
            if rng::bernoulli(&mut self.rng, self.p) {
                drop.extend(atom.parts.iter().cloned());
            }
        }
        Some(pending.iter().filter(|c| !drop.contains(&c.id)).cloned().collect())
    }
}

/// Screening step: the oracle only ever sees the confirmed view.
pub fn screen(
    atom: &AtomicClaim,
    view: ConfirmedView<'_>,
    oracle: &mut dyn EntailmentOracle,
    registry: &ClaimRegistry,
) -> Label {
    oracle.judge(atom, view, registry)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    ForwardTagged,
    Verify,
}

/// Policy routing of a yellow atom from `sender`.
pub fn route(atom: &AtomicClaim, policy: &GovernancePolicy, sender: usize) -> Result<Route> {
    if atom.label() != Label::Yellow {
        return Err(Error::NotYellow(atom.label().as_str()));
    }
    Ok(match policy.kind {
        PolicyKind::LowIntervention => Route::ForwardTagged,
        PolicyKind::Balanced if policy.hub_set.contains(&sender) => Route::Verify,
        PolicyKind::Balanced => Route::ForwardTagged,
        PolicyKind::Strict => Route::Verify,
    })
}

/// Verifies a routed atom and applies the verdict to it.
pub fn verify(atom: &mut AtomicClaim, oracle: &mut dyn VerifierOracle, registry: &ClaimRegistry) -> Verdict {
    let v = oracle.verify(atom, registry);
    match v {
        Verdict::VerifiedTrue => atom.confirm(),
        Verdict::VerifiedFalse => atom.reject(),
        Verdict::Unresolved => atom.hold(RiskTag::Uncertain),
    }
    v
}
