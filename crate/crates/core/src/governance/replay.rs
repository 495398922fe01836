use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::claim::{AtomicClaim, ClaimId, Label, RiskTag, Source};
use super::lineage::{update_lineage, LineageGraph};
use super::oracle::{composite_id, ClaimRegistry};
use super::trace::{Action, TraceRecord};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub lineage: LineageGraph,
    /// Fraction of agents whose first send of round `t` carried the tracked claim.
    pub coverage: Vec<f64>,
    /// Agents that carried the tracked claim without having received it first.
    pub roots: Vec<usize>,
    /// Records skipped because they failed to parse or were inconsistent.
    pub warnings: usize,
    pub messages: usize,
}

fn atoms_of(rec: &TraceRecord, registry: &ClaimRegistry, lineage: &LineageGraph) -> Vec<AtomicClaim> {
    let src = Source::Agent(rec.sender);
    let Some(labels) = &rec.labels else {
        // Ungoverned traffic is screened forensically against the lineage
        // rebuilt so far, without noise.
        return rec
            .claim_ids
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut a = AtomicClaim::new(i, c.clone(), registry.category(c), src, rec.round);
                apply(&mut a, registry.truth_label(c, lineage.confirmed_view()));
                a
            })
            .collect();
    };
    let mut atoms: Vec<AtomicClaim> = Vec::new();
    if rec.atom_of.is_empty() {
        for (i, (c, l)) in rec.claim_ids.iter().zip(labels).enumerate() {
            if let Some(l) = l {
                let mut a = AtomicClaim::new(i, c.clone(), registry.category(c), src, rec.round);
                apply(&mut a, *l);
                atoms.push(a);
            }
        }
        return atoms;
    }
    let mut groups: Vec<(usize, Vec<ClaimId>, Label)> = Vec::new();
    for ((c, l), &k) in rec.claim_ids.iter().zip(labels).zip(&rec.atom_of) {
        let Some(l) = l else { continue };
        match groups.iter_mut().find(|g| g.0 == k) {
            Some(g) => g.1.push(c.clone()),
            None => groups.push((k, alloc::vec![c.clone()], *l)),
        }
    }
    groups.sort_by_key(|g| g.0);
    for (k, parts, l) in groups {
        let mut a = AtomicClaim::composite(k, composite_id(rec.sender, rec.round), parts, src, rec.round);
        apply(&mut a, l);
        atoms.push(a);
    }
    atoms
}

fn apply(a: &mut AtomicClaim, l: Label) {
    match l {
        Label::Green => a.confirm(),
        Label::Red => a.reject(),
        Label::Yellow => a.hold(RiskTag::Uncertain),
    }
}

fn finish(group: &[TraceRecord], registry: &ClaimRegistry, lineage: &mut LineageGraph) -> Result<()> {
    let mut rejected: Vec<AtomicClaim> = Vec::new();
    let last = group.len() - 1;
    for (i, rec) in group.iter().enumerate() {
        let mut atoms = atoms_of(rec, registry, lineage);
        if i == last && rec.action == Action::Release {
            update_lineage(lineage, &atoms, &rejected, registry)?;
            return Ok(());
        }
        for a in atoms.iter().filter(|a| a.label() == Label::Red) {
            if !rejected.iter().any(|r| r.claim_id == a.claim_id) {
                rejected.push(a.clone());
            }
        }
        if i == last {
            atoms.retain(|a| a.label() != Label::Red);
            for a in atoms.iter_mut().filter(|a| a.label() == Label::Yellow) {
                a.hold(RiskTag::HighRisk);
            }
            update_lineage(lineage, &atoms, &rejected, registry)?;
        }
    }
    Ok(())
}

/// Rebuilds lineage and per-round adoption of `tracked` from a trace log,
/// without touching any run state.
///
/// `records` yields one item per log line; `Err` items (unparseable lines)
/// and inconsistent records are skipped and counted as warnings. Records of
/// one message must be contiguous and end with a release or breaker record.
/// The lineage starts from the registry's reference facts, as online.
pub fn replay_offline<E>(
    records: impl IntoIterator<Item = core::result::Result<TraceRecord, E>>,
    registry: &ClaimRegistry,
    tracked: &ClaimId,
    n: usize,
    horizon: usize,
) -> Result<ReplayReport> {
    let mut lineage = LineageGraph::anchored(registry);
    let mut carriers: Vec<BTreeSet<usize>> = alloc::vec![BTreeSet::new(); horizon];
    let mut first_receipt: Vec<Option<usize>> = alloc::vec![None; n];
    let mut roots = BTreeSet::new();
    let mut warnings = 0;
    let mut messages = 0;
    let mut group: Vec<TraceRecord> = Vec::new();

    for item in records {
        let Ok(rec) = item else {
            warnings += 1;
            continue;
        };
        if !rec.is_well_formed(n) {
            warnings += 1;
            continue;
        }
        if let Some(open) = group.first() {
            let same = open.round == rec.round && open.sender == rec.sender && rec.attempt == group.len();
            if !same {
                warnings += group.len();
                group.clear();
            }
        }
        if group.is_empty() && rec.attempt != 0 {
            warnings += 1;
            continue;
        }
        if group.is_empty() && rec.carries(tracked) {
            if rec.round < horizon {
                carriers[rec.round].insert(rec.sender);
            }
            if first_receipt[rec.sender].is_none_or(|t| t >= rec.round) {
                roots.insert(rec.sender);
            }
        }
        let closes = rec.action.is_final();
        if closes && rec.delivered().contains(&tracked) {
            for &r in &rec.receivers {
                if first_receipt[r].is_none_or(|t| t > rec.round) {
                    first_receipt[r] = Some(rec.round);
                }
            }
        }
        group.push(rec);
        if closes {
            finish(&group, registry, &mut lineage)?;
            messages += 1;
            group.clear();
        }
    }
    warnings += group.len();
    let coverage = carriers.iter().map(|c| c.len() as f64 / n.max(1) as f64).collect();
    Ok(ReplayReport {
        lineage,
        coverage,
        roots: roots.into_iter().collect(),
        warnings,
        messages,
    })
}
