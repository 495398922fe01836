use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Stable identity of a claim, shared by all restatements of it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClaimId(pub String);

impl ClaimId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClaimId {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// About the external world: entities, values, citations.
    #[default]
    Factuality,
    /// About task requirements and internal state: constraints, decisions.
    Faithfulness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Green,
    Yellow,
    Red,
}

impl Label {
    pub const fn as_str(self) -> &'static str {
        match self {
            Label::Green => "green",
            Label::Yellow => "yellow",
            Label::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Confirmed,
    Unverified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskTag {
    Uncertain,
    HighRisk,
}

/// Who introduced a lineage node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "agent")]
pub enum Source {
    Agent(usize),
    /// Trusted task reference, confirmed before the run starts.
    Reference,
    /// Evidence returned by a verification tool.
    Verifier,
}

/// One claim inside a structured message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageClaim {
    pub id: ClaimId,
    #[serde(default)]
    pub category: Category,
}

/// A message as produced by an agent, before governance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMessage {
    pub sender: usize,
    pub round: usize,
    pub claims: Vec<MessageClaim>,
}

/// Minimal independently verifiable unit of a message.
///
/// Invariants: confirmed atoms are green, red atoms are never confirmed, and
/// high-risk atoms are unverified. The transition methods preserve them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub atom_id: usize,
    pub claim_id: ClaimId,
    /// Constituent claims when the atom wraps a whole message; otherwise just
    /// `[claim_id]`.
    pub parts: Vec<ClaimId>,
    pub category: Category,
    pub source: Source,
    pub timestamp: usize,
    label: Label,
    status: Status,
    risk_tag: Option<RiskTag>,
}

impl AtomicClaim {
    pub fn new(atom_id: usize, claim_id: ClaimId, category: Category, source: Source, timestamp: usize) -> Self {
        Self {
            atom_id,
            parts: alloc::vec![claim_id.clone()],
            claim_id,
            category,
            source,
            timestamp,
            label: Label::Yellow,
            status: Status::Unverified,
            risk_tag: None,
        }
    }

    pub fn composite(atom_id: usize, claim_id: ClaimId, parts: Vec<ClaimId>, source: Source, timestamp: usize) -> Self {
        Self {
            parts,
            ..Self::new(atom_id, claim_id, Category::Factuality, source, timestamp)
        }
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn risk_tag(&self) -> Option<RiskTag> {
        self.risk_tag
    }

    pub fn is_composite(&self) -> bool {
        self.parts.len() != 1 || self.parts[0] != self.claim_id
    }

    pub fn contains(&self, claim: &ClaimId) -> bool {
        self.parts.iter().any(|p| p == claim)
    }

    /// Green and trusted.
    pub fn confirm(&mut self) {
        self.label = Label::Green;
        self.status = Status::Confirmed;
        self.risk_tag = None;
    }

    /// Green label without promotion to trusted context (used when a label is
    /// observed but the atom is not yet finalized).
    pub fn set_green(&mut self) {
        self.label = Label::Green;
    }

    pub fn reject(&mut self) {
        self.label = Label::Red;
        self.status = Status::Unverified;
        self.risk_tag = None;
    }

    pub fn hold(&mut self, tag: RiskTag) {
        self.label = Label::Yellow;
        self.status = Status::Unverified;
        self.risk_tag = Some(tag);
    }

    /// Resets to the initial unlabeled state (yellow, unverified, untagged).
    pub fn reset(&mut self) {
        self.label = Label::Yellow;
        self.status = Status::Unverified;
        self.risk_tag = None;
    }

    pub fn is_consistent(&self) -> bool {
        let confirmed_green = self.status != Status::Confirmed || self.label == Label::Green;
        let high_risk_unverified = self.risk_tag != Some(RiskTag::HighRisk) || self.status == Status::Unverified;
        confirmed_green && high_risk_unverified
    }
}
