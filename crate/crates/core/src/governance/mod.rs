//! Lineage-based governance on the message path.
//!
//! Every outgoing message is decomposed into atomic claims, screened against
//! the confirmed part of a lineage graph (green / yellow / red), routed by
//! policy, optionally verified, and then either released or blocked with
//! feedback. Blocked senders may resubmit up to `K` times before a circuit
//! breaker drops persistently red atoms and forwards persistently yellow ones
//! with a high-risk tag. The same pipeline replays recorded traces offline.
//!
//! Entailment, verification, and resubmission are oracles behind traits; the
//! simulation implementations resolve claims by registry lookup and inject
//! configurable error rates.

mod analysis;
mod claim;
mod lineage;
mod oracle;
mod pipeline;
mod replay;
mod trace;

pub use self::analysis::{effective_params, interception_outcomes, InterceptionOutcomes};
pub use self::claim::{AtomicClaim, Category, ClaimId, Label, MessageClaim, RawMessage, RiskTag, Source, Status};
pub use self::lineage::{
    evidence_for, update_lineage, CanonicalLineage, ConfirmedView, EdgeKind, LineageDelta, LineageEdge, LineageGraph, NodeRecord,
};
pub use self::oracle::{
    decompose, route, screen, verify, ClaimRegistry, ComplianceResubmitter, Decomposer, Decomposition,
    EntailmentOracle, NoisyEntailment, NoisyVerifier, OracleConfig, ResubmitOracle, Route, ScreeningNoise, Verdict,
    VerifierConfig, VerifierOracle,
};
pub use self::pipeline::{
    actuate, Ablation, ActuationOutcome, FeedbackPackage, GovernancePolicy, GovernedMessage, Governor, PolicyKind,
    DEFAULT_RETRY_CAP, REWRITE_DIRECTIVE,
};
pub use self::replay::{replay_offline, ReplayReport};
pub use self::trace::{Action, TraceRecord};
