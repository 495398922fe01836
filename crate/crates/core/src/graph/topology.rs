use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{DirectedGraph, Edge};
use crate::rng;
use crate::{Error, Result};

/// Topology presets, plus `Explicit` for user-supplied edge lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Star,
    Chain,
    LayeredHorizontal,
    Complete,
    Explicit,
}

impl TopologyKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Star => "star",
            TopologyKind::Chain => "chain",
            TopologyKind::LayeredHorizontal => "layered_horizontal",
            TopologyKind::Complete => "complete",
            TopologyKind::Explicit => "explicit",
        }
    }

    pub const PRESETS: [TopologyKind; 4] = [
        TopologyKind::Star,
        TopologyKind::Chain,
        TopologyKind::LayeredHorizontal,
        TopologyKind::Complete,
    ];
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(TopologyKind::Star),
            "chain" => Ok(TopologyKind::Chain),
            "layered_horizontal" => Ok(TopologyKind::LayeredHorizontal),
            "complete" => Ok(TopologyKind::Complete),
            "explicit" => Ok(TopologyKind::Explicit),
            other => Err(Error::InvalidConfig(alloc::format!("unknown topology `{other}`"))),
        }
    }
}

/// Parameters of a generated topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub n: usize,
    /// Reverse-edge probability for `layered_horizontal`.
    #[serde(default)]
    pub p_h: f64,
    /// Skip-connection probability. Only 0 is supported.
    #[serde(default)]
    pub p_s: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Edge list for `explicit`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<Edge>,
}

impl TopologyConfig {
    pub fn new(kind: TopologyKind, n: usize) -> Self {
        Self {
            kind,
            n,
            p_h: 0.0,
            p_s: 0.0,
            rng_seed: 0,
            edges: Vec::new(),
        }
    }

    /// Layered-horizontal preset; the calibration experiments use `p_h = 0.3`.
    pub fn layered_horizontal(n: usize, p_h: f64, rng_seed: u64) -> Self {
        Self {
            p_h,
            rng_seed,
            ..Self::new(TopologyKind::LayeredHorizontal, n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_h) {
            return Err(Error::OutOfRange { name: "p_h", value: self.p_h });
        }
        if self.p_s != 0.0 {
            return Err(Error::OutOfRange { name: "p_s", value: self.p_s });
        }
        Ok(())
    }

    pub fn build(&self) -> Result<DirectedGraph> {
        self.validate()?;
        match self.kind {
            TopologyKind::Star => make_star(self.n),
            TopologyKind::Chain => make_chain(self.n),
            TopologyKind::LayeredHorizontal => make_layered_horizontal(self),
            TopologyKind::Complete => make_complete(self.n),
            TopologyKind::Explicit => {
                DirectedGraph::build(self.n, TopologyKind::Explicit, None, self.edges.iter().copied())
            }
        }
    }
}

fn require_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidSize { n, min: 2 })
    } else {
        Ok(())
    }
}

/// Bidirectional star with agent 0 as the hub.
pub fn make_star(n: usize) -> Result<DirectedGraph> {
    require_n(n)?;
    let edges = (1..n).flat_map(|i| [Edge::new(0, i), Edge::new(i, 0)]);
    DirectedGraph::build(n, TopologyKind::Star, None, edges)
}

/// Unidirectional chain `0 -> 1 -> ... -> n-1`.
pub fn make_chain(n: usize) -> Result<DirectedGraph> {
    require_n(n)?;
    DirectedGraph::build(n, TopologyKind::Chain, None, chain_edges(n))
}

fn chain_edges(n: usize) -> impl Iterator<Item = Edge> {
    (0..n - 1).map(|i| Edge::new(i, i + 1))
}

/// Chain plus static reverse edges `i+1 -> i`, each present with probability
/// `p_h`. The Bernoulli draws happen once, in pair order, from `rng_seed`.
pub fn make_layered_horizontal(cfg: &TopologyConfig) -> Result<DirectedGraph> {
    if cfg.kind != TopologyKind::LayeredHorizontal {
        return Err(Error::KindMismatch(cfg.kind.as_str()));
    }
    cfg.validate()?;
    require_n(cfg.n)?;
    let mut rng = rng::stream(cfg.rng_seed, rng::DYNAMICS_STREAM);
    let reverse: Vec<Edge> = (0..cfg.n - 1)
        .filter(|_| rng::bernoulli(&mut rng, cfg.p_h))
        .map(|i| Edge::new(i + 1, i))
        .collect();
    DirectedGraph::build(
        cfg.n,
        TopologyKind::LayeredHorizontal,
        Some(cfg.rng_seed),
        chain_edges(cfg.n).chain(reverse),
    )
}

/// Complete directed graph without self-loops.
pub fn make_complete(n: usize) -> Result<DirectedGraph> {
    require_n(n)?;
    let edges = (0..n).flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| Edge::new(j, i)));
    DirectedGraph::build(n, TopologyKind::Complete, None, edges)
}
