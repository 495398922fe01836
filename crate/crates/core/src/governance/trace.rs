use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::claim::{ClaimId, Label};
use super::lineage::LineageDelta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Release,
    /// First pass contained red atoms; feedback sent.
    Block,
    /// A resubmission still contained red atoms; feedback sent again.
    Retry,
    /// Retry cap reached: red atoms excluded, yellow atoms tagged high risk.
    Breaker,
}

impl Action {
    pub const fn as_str(self) -> &'static str {
        match self {
            Action::Release => "release",
            Action::Block => "block",
            Action::Retry => "retry",
            Action::Breaker => "breaker",
        }
    }

    /// Whether this record closes the processing of a message.
    pub const fn is_final(self) -> bool {
        matches!(self, Action::Release | Action::Breaker)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One processing pass of one message, as written to the trace log.
///
/// `labels` is `None` for ungoverned traffic. Inside it, `None` marks a claim
/// the decomposer missed. `atom_of` is only present when several claims were
/// judged as one atom, and then maps each claim to its atom index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub sender: usize,
    pub receivers: Vec<usize>,
    #[serde(default)]
    pub attempt: usize,
    pub claim_ids: Vec<ClaimId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atom_of: Vec<usize>,
    #[serde(default)]
    pub labels: Option<Vec<Option<Label>>>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "LineageDelta::is_empty")]
    pub lineage_delta: LineageDelta,
}

impl TraceRecord {
    /// Record of an ungoverned message.
    pub fn ungoverned(round: usize, sender: usize, receivers: &[usize], claim_ids: Vec<ClaimId>) -> Self {
        Self {
            round,
            sender,
            receivers: receivers.to_vec(),
            attempt: 0,
            claim_ids,
            atom_of: Vec::new(),
            labels: None,
            action: Action::Release,
            lineage_delta: LineageDelta::default(),
        }
    }

    pub fn carries(&self, claim: &ClaimId) -> bool {
        self.claim_ids.contains(claim)
    }

    /// Claims that reached the receivers, if this record closes a message.
    pub fn delivered(&self) -> Vec<&ClaimId> {
        match (self.action, &self.labels) {
            (Action::Release, _) => self.claim_ids.iter().collect(),
            (Action::Breaker, Some(labels)) => self
                .claim_ids
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l != Some(Label::Red))
                .map(|(c, _)| c)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Structural consistency; replay skips records that fail it.
    pub fn is_well_formed(&self, n: usize) -> bool {
        let labels_ok = self.labels.as_ref().is_none_or(|l| l.len() == self.claim_ids.len());
        let atoms_ok = self.atom_of.is_empty() || self.atom_of.len() == self.claim_ids.len();
        let ungoverned_ok = self.labels.is_some() || (self.action == Action::Release && self.atom_of.is_empty());
        self.sender < n && self.receivers.iter().all(|&r| r < n) && labels_ok && atoms_ok && ungoverned_ok
    }
}
