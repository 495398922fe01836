//! One message-level run: the stochastic cascade with a defense on the
//! message path, its trace log, and per-run metrics.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::SeedClaim;
use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};
use crate::governance::{
    Ablation, ClaimId, ClaimRegistry, GovernancePolicy, Governor, LineageGraph, MessageClaim, RawMessage, TraceRecord,
};
use crate::graph::{DirectedGraph, TopologyKind};
use crate::montecarlo::{cascade, seed_row, GateDecision, MessageGate, TrialTrace};
use crate::rng::{self, ChaCha8Rng};

/// Reference facts every registry starts with; the seed claim negates the first.
pub const REFERENCE_FACTS: usize = 3;
/// Detection probability of the agent self-check baseline.
pub const DEFAULT_REFLECTION_DETECT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// `beta * multiplier` exceeded 1 and was clamped.
    BetaClamped { requested: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::BetaClamped { requested } => write!(f, "effective beta {requested} clamped to 1"),
        }
    }
}

/// Everything a single run needs apart from the defense and its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub graph: DirectedGraph,
    pub params: DynamicsParams,
    pub seeds: BTreeSet<usize>,
    pub rounds: usize,
    /// Claim the seeds carry; set by injection.
    pub seed_claim: Option<SeedClaim>,
    pub warnings: Vec<Warning>,
}

impl RunConfig {
    pub fn new(graph: DirectedGraph, params: DynamicsParams, seeds: BTreeSet<usize>, rounds: usize) -> Result<Self> {
        let cfg = Self {
            graph,
            params,
            seeds,
            rounds,
            seed_claim: None,
            warnings: Vec::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        seed_row(self.graph.n(), &self.seeds)?;
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("horizon must be at least one round".into()));
        }
        Ok(())
    }

    pub fn tracked_claim(&self) -> SeedClaim {
        self.seed_claim.clone().unwrap_or_default()
    }

    /// Ground truth used by simulated oracles and forensic replay.
    pub fn registry(&self) -> Result<ClaimRegistry> {
        let mut r = ClaimRegistry::with_reference(REFERENCE_FACTS);
        let seed = self.tracked_claim();
        r.add_falsehood(seed.claim_id, Some(ClaimId::new("ref:0")), seed.category)?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Defense {
    #[default]
    None,
    /// Each infected sender re-reads its own message and catches the seed
    /// claim with probability `detect`, without any lineage.
    Reflection { detect: f64 },
    Governed {
        policy: GovernancePolicy,
        #[serde(default)]
        ablation: Ablation,
    },
}

impl Defense {
    pub fn label(&self) -> String {
        match self {
            Defense::None => "none".into(),
            Defense::Reflection { .. } => "reflection".into(),
            Defense::Governed { policy, ablation: Ablation::Full } => format!("{}", policy.kind),
            Defense::Governed { policy, ablation } => format!("{}/{}", policy.kind, ablation),
        }
    }
}

/// Claims an agent emits in one round: a restated reference fact, the seed
/// claim while infected, and a fresh benign observation.
pub fn compose_message(registry: &ClaimRegistry, seed: &SeedClaim, sender: usize, round: usize, carries: bool) -> RawMessage {
    let refs = registry.reference();
    let mut claims = Vec::with_capacity(3);
    if !refs.is_empty() {
        claims.push(refs[sender % refs.len()].clone());
    }
    if carries {
        claims.push(MessageClaim {
            id: seed.claim_id.clone(),
            category: seed.category,
        });
    }
    let obs = ClaimId(format!("obs:{sender}:{round}"));
    claims.push(MessageClaim {
        category: registry.category(&obs),
        id: obs,
    });
    RawMessage { sender, round, claims }
}

struct OpenLog<'a> {
    registry: &'a ClaimRegistry,
    seed: &'a SeedClaim,
    records: Option<Vec<TraceRecord>>,
}

impl MessageGate for OpenLog<'_> {
    fn intercept(&mut self, sender: usize, round: usize, receivers: &[usize], carries: bool) -> GateDecision {
        if let Some(log) = &mut self.records {
            let m = compose_message(self.registry, self.seed, sender, round, carries);
            log.push(TraceRecord::ungoverned(round, sender, receivers, m.claims.into_iter().map(|c| c.id).collect()));
        }
        GateDecision {
            released: carries,
            corrected: false,
        }
    }
}

struct Reflection<'a> {
    inner: OpenLog<'a>,
    detect: f64,
    rng: ChaCha8Rng,
}

impl MessageGate for Reflection<'_> {
    fn intercept(&mut self, sender: usize, round: usize, receivers: &[usize], carries: bool) -> GateDecision {
        let caught = rng::bernoulli(&mut self.rng, self.detect) && carries;
        self.inner.intercept(sender, round, receivers, carries && !caught);
        GateDecision {
            released: carries && !caught,
            corrected: caught,
        }
    }
}

struct Governed<'a> {
    gov: Governor,
    seed: &'a SeedClaim,
    error: Option<Error>,
}

impl MessageGate for Governed<'_> {
    fn intercept(&mut self, sender: usize, round: usize, receivers: &[usize], carries: bool) -> GateDecision {
        let msg = compose_message(self.gov.registry(), self.seed, sender, round, carries);
        match self.gov.process(msg, receivers) {
            Ok(out) => GateDecision {
                released: out.message.carries(&self.seed.claim_id),
                corrected: out.dropped.contains(&self.seed.claim_id),
            },
            Err(e) => {
                self.error.get_or_insert(e);
                GateDecision {
                    released: carries,
                    corrected: false,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: TrialTrace,
    /// Trace log; ungoverned runs only log when asked to.
    pub records: Vec<TraceRecord>,
    pub lineage: Option<LineageGraph>,
}

/// Runs `cfg` under `defense`. Transmission and recovery draws come from the
/// dynamics stream of `run_seed` and are identical across defenses, so arms
/// sharing a seed are paired.
pub fn execute(cfg: &RunConfig, defense: &Defense, run_seed: u64, log: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let g = &cfg.graph;
    let registry = cfg.registry()?;
    let seed = cfg.tracked_claim();
    let initial = seed_row(g.n(), &cfg.seeds)?;
    let mut dyn_rng = rng::stream(run_seed, rng::DYNAMICS_STREAM);
    let (beta, delta) = (cfg.params.beta, cfg.params.delta);
    let open = || OpenLog {
        registry: &registry,
        seed: &seed,
        records: log.then(Vec::new),
    };
    let (states, records, lineage) = match defense {
        Defense::None => {
            let mut gate = open();
            let c = cascade(g, initial, beta, delta, cfg.rounds, &mut dyn_rng, &mut gate, false);
            (c.states, gate.records.unwrap_or_default(), None)
        }
        Defense::Reflection { detect } => {
            if !(0.0..=1.0).contains(detect) {
                return Err(Error::OutOfRange {
                    name: "detect",
                    value: *detect,
                });
            }
            let mut gate = Reflection {
                inner: open(),
                detect: *detect,
                rng: rng::stream(run_seed, rng::ORACLE_STREAM + 4),
            };
            let c = cascade(g, initial, beta, delta, cfg.rounds, &mut dyn_rng, &mut gate, false);
            (c.states, gate.inner.records.unwrap_or_default(), None)
        }
        Defense::Governed { policy, ablation } => {
            policy.validate(g.n())?;
            let gov = Governor::simulated(policy.clone(), *ablation, registry.clone(), run_seed)?;
            let mut gate = Governed {
                gov,
                seed: &seed,
                error: None,
            };
            let c = cascade(g, initial, beta, delta, cfg.rounds, &mut dyn_rng, &mut gate, false);
            if let Some(e) = gate.error {
                return Err(e);
            }
            let (lineage, records) = gate.gov.into_parts();
            (c.states, records, Some(lineage))
        }
    };
    Ok(RunOutcome {
        trace: TrialTrace {
            states,
            seed_nodes: cfg.seeds.clone(),
            rng_seed: run_seed,
            stopped_at: None,
        },
        records,
        lineage,
    })
}

/// Where the final artifact is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "node")]
pub enum Sink {
    Node(usize),
    /// More than half of the agents infected over the last `w` rounds.
    Majority,
}

/// Sink selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "node")]
pub enum SinkPolicy {
    /// Last node on chains and layered graphs, the hub on stars (or the last
    /// leaf when the hub is the injection target), majority on complete and
    /// explicit graphs.
    #[default]
    Auto,
    Node(usize),
    Majority,
}

impl SinkPolicy {
    pub fn resolve(self, g: &DirectedGraph, target: Option<usize>) -> Result<Sink> {
        let n = g.n();
        match self {
            SinkPolicy::Node(v) => {
                g.check(v)?;
                Ok(Sink::Node(v))
            }
            SinkPolicy::Majority => Ok(Sink::Majority),
            SinkPolicy::Auto => Ok(match g.kind() {
                TopologyKind::Chain | TopologyKind::LayeredHorizontal => Sink::Node(n - 1),
                TopologyKind::Star if target == Some(0) && n > 1 => Sink::Node(n - 1),
                TopologyKind::Star => Sink::Node(0),
                TopologyKind::Complete | TopologyKind::Explicit => Sink::Majority,
            }),
        }
    }
}

/// Whether the final artifact is infected at the horizon.
pub fn attack_success(trace: &TrialTrace, sink: Sink, w: usize) -> bool {
    let t = trace.horizon();
    match sink {
        Sink::Node(v) => trace.states[t].get(v).copied().unwrap_or(false),
        Sink::Majority => {
            let w = w.clamp(1, t + 1);
            (t + 1 - w..=t).all(|k| trace.coverage(k) > 0.5)
        }
    }
}

/// Infected-sender message events strictly before `intervention_t`.
///
/// With a governed log, only deliveries that actually carried `tracked`
/// count; otherwise every infected agent's round counts as one event.
pub fn polluted_rounds(trace: &TrialTrace, log: Option<(&[TraceRecord], &ClaimId)>, intervention_t: usize) -> Result<usize> {
    if intervention_t > trace.horizon() {
        return Err(Error::OutOfRange {
            name: "intervention_t",
            value: intervention_t as f64,
        });
    }
    Ok(match log {
        Some((records, tracked)) => records
            .iter()
            .filter(|r| r.round < intervention_t && r.action.is_final() && r.delivered().contains(&tracked))
            .count(),
        None => trace.states[..intervention_t]
            .iter()
            .map(|row| row.iter().filter(|&&x| x).count())
            .sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::governance::{Action, OracleConfig, PolicyKind};
    use crate::graph::{make_chain, make_complete, make_star};

    fn cfg(g: DirectedGraph, beta: f64, delta: f64, seed: usize, rounds: usize) -> RunConfig {
        RunConfig::new(g, DynamicsParams::product(beta, delta).unwrap(), [seed].into(), rounds).unwrap()
    }

    fn strict_perfect() -> Defense {
        Defense::Governed {
            policy: GovernancePolicy::new(PolicyKind::Strict).with_oracle(OracleConfig::PERFECT),
            ablation: Ablation::Full,
        }
    }

    #[test]
    fn composed_message_layout() {
        let r = ClaimRegistry::with_reference(3);
        let s = SeedClaim::default();
        let m = compose_message(&r, &s, 4, 2, true);
        let ids: Vec<_> = m.claims.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["ref:1", s.claim_id.as_str(), "obs:4:2"]);
        assert_eq!(compose_message(&r, &s, 4, 2, false).claims.len(), 2);
    }

    #[test]
    fn open_run_matches_plain_trial() {
        let c = cfg(make_star(5).unwrap(), 0.4, 0.2, 0, 6);
        let a = execute(&c, &Defense::None, 17, false).unwrap();
        let b = crate::montecarlo::run_trial(&c.graph, &c.seeds, &c.params, 6, 17).unwrap();
        if b.stopped_at.is_none() {
            assert_eq!(a.trace.states, b.states);
        }
        assert!(a.records.is_empty());
    }

    #[test]
    fn perfect_strict_contains_the_seed() {
        let c = cfg(make_complete(5).unwrap(), 1.0, 0.0, 0, 6);
        for s in 0..20 {
            let out = execute(&c, &strict_perfect(), s, true).unwrap();
            assert_eq!(out.trace.states[1], [false; 5]);
            assert!(out.trace.states[1..].iter().all(|row| row.iter().all(|&x| !x)));
            let first = &out.records[0];
            assert_eq!(first.action, Action::Block);
        }
    }

    #[test]
    fn no_blocking_equals_no_defense() {
        let c = cfg(make_star(5).unwrap(), 0.5, 0.2, 0, 8);
        let nb = Defense::Governed {
            policy: GovernancePolicy::new(PolicyKind::Strict),
            ablation: Ablation::NoBlocking,
        };
        for s in 0..20 {
            let a = execute(&c, &nb, s, false).unwrap();
            let b = execute(&c, &Defense::None, s, false).unwrap();
            assert_eq!(a.trace.states, b.trace.states);
        }
    }

    #[test]
    fn reflection_only_helps() {
        let c = cfg(make_complete(5).unwrap(), 0.6, 0.1, 0, 8);
        for s in 0..20 {
            let a = execute(&c, &Defense::Reflection { detect: 1.0 }, s, false).unwrap();
            assert!(a.trace.states[1..].iter().all(|row| row.iter().all(|&x| !x)));
            let z = execute(&c, &Defense::Reflection { detect: 0.0 }, s, false).unwrap();
            assert_eq!(z.trace.states, execute(&c, &Defense::None, s, false).unwrap().trace.states);
        }
    }

    #[test]
    fn sink_rules() {
        let star = make_star(5).unwrap();
        assert_eq!(SinkPolicy::Auto.resolve(&star, Some(0)).unwrap(), Sink::Node(4));
        assert_eq!(SinkPolicy::Auto.resolve(&star, Some(2)).unwrap(), Sink::Node(0));
        assert_eq!(SinkPolicy::Auto.resolve(&make_chain(5).unwrap(), Some(0)).unwrap(), Sink::Node(4));
        assert_eq!(SinkPolicy::Auto.resolve(&make_complete(5).unwrap(), None).unwrap(), Sink::Majority);
        assert!(SinkPolicy::Node(9).resolve(&star, None).is_err());
    }

    #[test]
    fn success_flags() {
        let t = TrialTrace {
            states: vec![vec![true, false, false], vec![true, true, false], vec![true, true, true]],
            seed_nodes: [0].into(),
            rng_seed: 0,
            stopped_at: None,
        };
        assert!(attack_success(&t, Sink::Node(2), 2));
        assert!(attack_success(&t, Sink::Majority, 2));
        assert!(!attack_success(&t, Sink::Majority, 3));
    }

    #[test]
    fn polluted_round_counts() {
        let t = TrialTrace {
            states: vec![vec![true, false], vec![true, false], vec![false, true], vec![false, false]],
            seed_nodes: [0].into(),
            rng_seed: 0,
            stopped_at: None,
        };
        assert_eq!(polluted_rounds(&t, None, 2).unwrap(), 2);
        assert_eq!(polluted_rounds(&t, None, 0).unwrap(), 0);
        assert!(polluted_rounds(&t, None, 4).is_err());
    }

    #[test]
    fn zero_beta_never_spreads() {
        let c = cfg(make_chain(5).unwrap(), 0.0, 0.0, 0, 5);
        let out = execute(&c, &Defense::None, 3, true).unwrap();
        assert!(out.trace.states.iter().all(|row| row[1..].iter().all(|&x| !x)));
        assert_eq!(out.records.len(), 25);
    }
}
