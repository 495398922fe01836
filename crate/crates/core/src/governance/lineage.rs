use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::claim::{AtomicClaim, Category, ClaimId, Label, RiskTag, Source, Status};
use super::oracle::ClaimRegistry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Supports,
    Contradicts,
    DerivedFrom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineageEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// Serialized form of one lineage node, as written into trace logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub claim_id: ClaimId,
    pub source: Source,
    pub timestamp: usize,
    pub label: Label,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_tag: Option<RiskTag>,
}

impl NodeRecord {
    fn of(id: usize, a: &AtomicClaim) -> Self {
        Self {
            id,
            claim_id: a.claim_id.clone(),
            source: a.source,
            timestamp: a.timestamp,
            label: a.label(),
            status: a.status(),
            risk_tag: a.risk_tag(),
        }
    }
}

/// Nodes and edges added by one lineage update.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageDelta {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<LineageEdge>,
}

impl LineageDelta {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }
}

type NodeKey = (ClaimId, Source, usize, Label, Status, Option<RiskTag>);

/// Id-free sorted form used to compare two lineages up to node renaming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalLineage {
    pub nodes: Vec<NodeKey>,
    pub edges: Vec<(NodeKey, NodeKey, EdgeKind)>,
}

/// Provenance graph of atomic claims.
///
/// Only confirmed nodes, and the refutations they carry, are visible to
/// screening through [`ConfirmedView`]; unverified records exist for audit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineageGraph {
    nodes: Vec<AtomicClaim>,
    edges: Vec<LineageEdge>,
    confirmed: BTreeMap<ClaimId, usize>,
    /// Claim refuted by a confirmed evidence node.
    refuted: BTreeMap<ClaimId, usize>,
    /// Most recent non-red node per claim, target of derived-from edges.
    latest: BTreeMap<ClaimId, usize>,
}

/// Read-only trusted subview: the only thing screening may consult.
#[derive(Debug, Clone, Copy)]
pub struct ConfirmedView<'a> {
    graph: &'a LineageGraph,
}

impl<'a> ConfirmedView<'a> {
    pub fn entails(&self, claim: &ClaimId) -> bool {
        self.graph.confirmed.contains_key(claim)
    }

    /// Confirmed evidence node refuting `claim`, if any.
    pub fn refutation(&self, claim: &ClaimId) -> Option<&'a AtomicClaim> {
        self.graph.refuted.get(claim).map(|&i| &self.graph.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.graph.confirmed_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LineageGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Lineage whose trusted context starts with the registry's reference facts.
    pub fn anchored(registry: &ClaimRegistry) -> Self {
        let mut g = Self::new();
        for c in registry.reference() {
            let mut atom = AtomicClaim::new(0, c.id.clone(), c.category, Source::Reference, 0);
            atom.confirm();
            g.push(atom);
        }
        g
    }

    pub fn nodes(&self) -> &[AtomicClaim] {
        &self.nodes
    }

    pub fn edges(&self) -> &[LineageEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn confirmed_view(&self) -> ConfirmedView<'_> {
        ConfirmedView { graph: self }
    }

    pub fn confirmed_nodes(&self) -> impl Iterator<Item = &AtomicClaim> {
        self.nodes.iter().filter(|a| a.status() == Status::Confirmed)
    }

    pub fn confirmed_count(&self) -> usize {
        self.confirmed_nodes().count()
    }

    pub fn nodes_for<'a>(&'a self, claim: &'a ClaimId) -> impl Iterator<Item = (usize, &'a AtomicClaim)> + 'a {
        self.nodes.iter().enumerate().filter(move |(_, a)| a.contains(claim))
    }

    fn push(&mut self, mut atom: AtomicClaim) -> usize {
        let id = self.nodes.len();
        atom.atom_id = id;
        if atom.status() == Status::Confirmed {
            self.confirmed.entry(atom.claim_id.clone()).or_insert(id);
        }
        if atom.label() != Label::Red {
            for p in &atom.parts {
                self.latest.insert(p.clone(), id);
            }
            self.latest.insert(atom.claim_id.clone(), id);
        }
        self.nodes.push(atom);
        id
    }

    fn reaches_via_derivation(&self, from: usize, target: usize) -> bool {
        let mut stack = alloc::vec![from];
        let mut seen = alloc::vec![false; self.nodes.len()];
        while let Some(v) = stack.pop() {
            if v == target {
                return true;
            }
            if core::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(
                self.edges
                    .iter()
                    .filter(|e| e.kind == EdgeKind::DerivedFrom && e.from == v)
                    .map(|e| e.to),
            );
        }
        false
    }

    /// Adds an edge; derived-from edges that would close a cycle are rejected.
    pub fn add_edge(&mut self, from: usize, to: usize, kind: EdgeKind) -> Result<()> {
        let n = self.nodes.len();
        for idx in [from, to] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        if kind == EdgeKind::DerivedFrom && self.reaches_via_derivation(to, from) {
            return Err(Error::LineageCycle { from, to });
        }
        let e = LineageEdge { from, to, kind };
        if !self.edges.contains(&e) {
            self.edges.push(e);
        }
        Ok(())
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indeg = alloc::vec![0usize; n];
        let derived: Vec<_> = self.edges.iter().filter(|e| e.kind == EdgeKind::DerivedFrom).collect();
        for e in &derived {
            indeg[e.to] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for e in derived.iter().filter(|e| e.from == v) {
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    queue.push(e.to);
                }
            }
        }
        seen == n
    }

    pub fn canonical(&self) -> CanonicalLineage {
        let key = |a: &AtomicClaim| -> NodeKey {
            (a.claim_id.clone(), a.source, a.timestamp, a.label(), a.status(), a.risk_tag())
        };
        let mut nodes: Vec<_> = self.nodes.iter().map(key).collect();
        nodes.sort();
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| (key(&self.nodes[e.from]), key(&self.nodes[e.to]), e.kind))
            .collect();
        edges.sort();
        CanonicalLineage { nodes, edges }
    }

    /// Every node as a serializable record.
    pub fn records(&self) -> Vec<NodeRecord> {
        self.nodes.iter().enumerate().map(|(i, a)| NodeRecord::of(i, a)).collect()
    }
}

/// Confirmed claim that contradicts `atom`, or a synthetic verifier evidence
/// id when nothing in the trusted context explains the rejection.
pub fn evidence_for(atom: &AtomicClaim, registry: &ClaimRegistry, lineage: &LineageGraph) -> ClaimId {
    let view = lineage.confirmed_view();
    for p in &atom.parts {
        if let Some(neg) = registry.negation_of(p).filter(|n| view.entails(n)) {
            return neg.clone();
        }
        if let Some(ev) = view.refutation(p) {
            return ev.claim_id.clone();
        }
    }
    ClaimId(format!("ext:{}", atom.claim_id))
}

fn refuted_part<'a>(atom: &'a AtomicClaim, registry: &ClaimRegistry, lineage: &LineageGraph) -> &'a ClaimId {
    let view = lineage.confirmed_view();
    atom.parts
        .iter()
        .find(|p| registry.negation_of(p).is_some_and(|n| view.entails(n)) || view.refutation(p).is_some())
        .unwrap_or(&atom.claim_id)
}

/// Records one message's finalized atoms.
///
/// Released green atoms become confirmed (with a supports edge when they
/// restate an already confirmed claim), yellow atoms are stored unverified,
/// and red atoms, released or rejected, get a contradicts edge to their
/// evidence, which is added as a confirmed node when new. Non-red atoms that
/// repeat an earlier claim get a derived-from edge to its latest record.
pub fn update_lineage(
    lineage: &mut LineageGraph,
    released: &[AtomicClaim],
    rejected: &[AtomicClaim],
    registry: &ClaimRegistry,
) -> Result<LineageDelta> {
    let start_nodes = lineage.nodes.len();
    let start_edges = lineage.edges.len();
    for atom in released.iter().chain(rejected) {
        debug_assert!(atom.is_consistent());
        if atom.label() == Label::Red {
            let part = refuted_part(atom, registry, lineage).clone();
            let evidence = evidence_for(atom, registry, lineage);
            let id = lineage.push(atom.clone());
            let ev = match lineage.confirmed.get(&evidence) {
                Some(&e) => e,
                None => {
                    let mut e = AtomicClaim::new(0, evidence, Category::Factuality, Source::Verifier, atom.timestamp);
                    e.confirm();
                    lineage.push(e)
                }
            };
            lineage.add_edge(id, ev, EdgeKind::Contradicts)?;
            lineage.refuted.entry(part).or_insert(ev);
            continue;
        }
        let prior_confirmed = lineage.confirmed.get(&atom.claim_id).copied();
        let prior: Vec<usize> = atom.parts.iter().filter_map(|p| lineage.latest.get(p).copied()).collect();
        let green = atom.label() == Label::Green;
        let id = lineage.push(atom.clone());
        match prior_confirmed {
            Some(c) if green => lineage.add_edge(id, c, EdgeKind::Supports)?,
            _ => {
                for p in prior {
                    lineage.add_edge(id, p, EdgeKind::DerivedFrom)?;
                }
            }
        }
    }
    Ok(LineageDelta {
        nodes: (start_nodes..lineage.nodes.len())
            .map(|i| NodeRecord::of(i, &lineage.nodes[i]))
            .collect(),
        edges: lineage.edges[start_edges..].to_vec(),
    })
}
