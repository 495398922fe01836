//! Stochastic independent-cascade trials.
//!
//! Each round reads the state at `t` only: an inactive agent activates if at
//! least one active upstream agent's Bernoulli(beta) attempt succeeds, and an
//! active agent deactivates with probability delta. An agent changes state at
//! most once per round.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsParams;
use crate::graph::DirectedGraph;
use crate::rng;
use crate::{Error, Result};

/// Binary adoption states of one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTrace {
    /// `states[t][i] = X_i(t)` for `t = 0..=T`.
    pub states: Vec<Vec<bool>>,
    pub seed_nodes: BTreeSet<usize>,
    pub rng_seed: u64,
    /// First round at which every agent was active; later rounds are filled.
    pub stopped_at: Option<usize>,
}

impl TrialTrace {
    pub fn n(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn coverage(&self, t: usize) -> f64 {
        let row = &self.states[t];
        row.iter().filter(|&&x| x).count() as f64 / row.len() as f64
    }

    pub fn coverage_series(&self) -> Vec<f64> {
        (0..self.states.len()).map(|t| self.coverage(t)).collect()
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage(self.horizon())
    }

    /// Round at which agent `i` first became active.
    pub fn first_activation(&self, i: usize) -> Option<usize> {
        self.states.iter().position(|row| row[i])
    }
}

/// Per-round mean and standard error of coverage across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

impl AggregateSeries {
    /// Noise-free series, e.g. a synthetic trajectory.
    pub fn exact(mean: Vec<f64>) -> Self {
        let stderr = vec![0.0; mean.len()];
        Self { mean, stderr, trials: 1 }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len().saturating_sub(1)
    }
}

/// What a gate on the message path did with one sender's outgoing message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateDecision {
    /// The tracked falsehood reached the sender's receivers.
    pub released: bool,
    /// The sender abandoned the falsehood (it is inactive next round).
    pub corrected: bool,
}

/// Interposes on every agent's outgoing message, once per agent per round.
pub trait MessageGate {
    fn intercept(&mut self, sender: usize, round: usize, receivers: &[usize], carries: bool) -> GateDecision;
}

/// No interception: a carrying sender always releases the falsehood.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenGate;

impl MessageGate for OpenGate {
    fn intercept(&mut self, _: usize, _: usize, _: &[usize], carries: bool) -> GateDecision {
        GateDecision {
            released: carries,
            corrected: false,
        }
    }
}

pub(crate) struct Cascade {
    pub states: Vec<Vec<bool>>,
    pub stopped_at: Option<usize>,
}

/// Shared stochastic engine. The draw order is fixed (per receiver, one draw
/// per upstream edge, then one recovery draw) and every draw is consumed
/// regardless of state, so runs that share a seed stay paired across arms.
pub(crate) fn cascade<R: Rng + ?Sized, G: MessageGate + ?Sized>(
    g: &DirectedGraph,
    initial: Vec<bool>,
    beta: f64,
    delta: f64,
    rounds: usize,
    rng: &mut R,
    gate: &mut G,
    forward_fill: bool,
) -> Cascade {
    let n = g.n();
    let mut states = Vec::with_capacity(rounds + 1);
    let full = |row: &[bool]| row.iter().all(|&x| x);
    let mut stopped_at = (forward_fill && full(&initial)).then_some(0);
    states.push(initial);
    let mut released = vec![false; n];
    let mut corrected = vec![false; n];
    for t in 0..rounds {
        let cur = &states[t];
        if stopped_at.is_some() {
            states.push(vec![true; n]);
            continue;
        }
        for j in 0..n {
            let d = gate.intercept(j, t, g.outs(j), cur[j]);
            released[j] = cur[j] && d.released;
            corrected[j] = cur[j] && d.corrected;
        }
        let mut next = vec![false; n];
        for i in 0..n {
            let mut hit = false;
            for &j in g.ins(i) {
                let success = rng::bernoulli(rng, beta);
                hit |= released[j] && success;
            }
            let recovers = rng::bernoulli(rng, delta);
            next[i] = if cur[i] { !(corrected[i] || recovers) } else { hit };
        }
        if forward_fill && full(&next) {
            stopped_at = Some(t + 1);
        }
        states.push(next);
    }
    Cascade { states, stopped_at }
}

pub(crate) fn seed_row(n: usize, seeds: &BTreeSet<usize>) -> Result<Vec<bool>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed set is empty".into()));
    }
    let mut row = vec![false; n];
    for &s in seeds {
        if s >= n {
            return Err(Error::IndexOutOfRange { index: s, n });
        }
        row[s] = true;
    }
    Ok(row)
}

/// One independent-cascade trial with forward-fill after full infection.
/// `p.form` is ignored: trials always use per-edge Bernoulli attempts.
pub fn run_trial(
    g: &DirectedGraph,
    seeds: &BTreeSet<usize>,
    p: &DynamicsParams,
    rounds: usize,
    rng_seed: u64,
) -> Result<TrialTrace> {
    p.validate()?;
    let initial = seed_row(g.n(), seeds)?;
    let mut rng = rng::stream(rng_seed, rng::DYNAMICS_STREAM);
    let c = cascade(g, initial, p.beta, p.delta, rounds, &mut rng, &mut OpenGate, true);
    Ok(TrialTrace {
        states: c.states,
        seed_nodes: seeds.clone(),
        rng_seed,
        stopped_at: c.stopped_at,
    })
}

/// `trials` independent trials; trial `r` uses `derive_seed(master_seed, r)`.
pub fn run_trials(
    g: &DirectedGraph,
    seeds: &BTreeSet<usize>,
    p: &DynamicsParams,
    rounds: usize,
    master_seed: u64,
    trials: usize,
) -> Result<Vec<TrialTrace>> {
    (0..trials as u64)
        .map(|r| run_trial(g, seeds, p, rounds, rng::derive_seed(master_seed, r)))
        .collect()
}

fn check_shapes(traces: &[TrialTrace]) -> Result<(usize, usize)> {
    let first = traces.first().ok_or(Error::EmptyTraces)?;
    let (n, rounds) = (first.n(), first.states.len());
    for t in traces {
        if t.states.len() != rounds || t.states.iter().any(|row| row.len() != n) {
            return Err(Error::ShapeMismatch {
                expected_n: n,
                expected_rounds: rounds,
                n: t.n(),
                rounds: t.states.len(),
            });
        }
    }
    Ok((n, rounds))
}

/// Mean coverage per round over all `R * n` indicators, with the standard
/// error of per-trial coverage.
pub fn aggregate(traces: &[TrialTrace]) -> Result<AggregateSeries> {
    let (_, rounds) = check_shapes(traces)?;
    let r = traces.len() as f64;
    let mut mean = Vec::with_capacity(rounds);
    let mut stderr = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let covs: Vec<f64> = traces.iter().map(|tr| tr.coverage(t)).collect();
        let m = covs.iter().sum::<f64>() / r;
        let se = if traces.len() > 1 {
            let var = covs.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (r - 1.0);
            libm::sqrt(var / r)
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok(AggregateSeries {
        mean,
        stderr,
        trials: traces.len(),
    })
}

/// `freq[t][i]`: fraction of trials with agent `i` active at round `t`.
pub fn empirical_state(traces: &[TrialTrace]) -> Result<Vec<Vec<f64>>> {
    let (n, rounds) = check_shapes(traces)?;
    let r = traces.len() as f64;
    let mut freq = vec![vec![0.0; n]; rounds];
    for tr in traces {
        for (t, row) in tr.states.iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                if x {
                    freq[t][i] += 1.0;
                }
            }
        }
    }
    for row in freq.iter_mut() {
        for v in row.iter_mut() {
            *v /= r;
        }
    }
    Ok(freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_chain, make_complete, make_star};

    fn seeds(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn certain_transmission_from_hub() {
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(1.0, 0.0).unwrap();
        for r in 0..20 {
            let tr = run_trial(&g, &seeds(&[0]), &p, 2, r).unwrap();
            assert!(tr.states[1].iter().all(|&x| x));
            assert_eq!(tr.stopped_at, Some(1));
            assert_eq!(tr.states[0], vec![true, false, false, false, false]);
        }
    }

    #[test]
    fn zero_beta_only_recovers() {
        let g = make_complete(5).unwrap();
        let p = DynamicsParams::product(0.0, 0.3).unwrap();
        let tr = run_trial(&g, &seeds(&[0, 2]), &p, 10, 5).unwrap();
        for w in tr.states.windows(2) {
            for i in 0..5 {
                assert!(!w[1][i] || w[0][i], "agent {i} activated with beta = 0");
            }
        }
    }

    #[test]
    fn chain_wavefront() {
        let g = make_chain(5).unwrap();
        let p = DynamicsParams::product(1.0, 0.0).unwrap();
        let tr = run_trial(&g, &seeds(&[0]), &p, 6, 9).unwrap();
        for i in 0..5 {
            assert_eq!(tr.first_activation(i), Some(i));
        }
        assert_eq!(tr.stopped_at, Some(4));
        assert!(tr.states[6].iter().all(|&x| x));
    }

    #[test]
    fn empty_or_bad_seeds() {
        let g = make_chain(3).unwrap();
        let p = DynamicsParams::product(0.5, 0.0).unwrap();
        assert!(matches!(run_trial(&g, &seeds(&[]), &p, 3, 0), Err(Error::InvalidConfig(_))));
        assert!(run_trial(&g, &seeds(&[3]), &p, 3, 0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(0.4, 0.1).unwrap();
        let one = run_trial(&g, &seeds(&[0]), &p, 4, 3).unwrap();
        let agg = aggregate(core::slice::from_ref(&one)).unwrap();
        assert_eq!(agg.mean, one.coverage_series());
        assert!(agg.stderr.iter().all(|&s| s == 0.0));

        let mk = |row: Vec<bool>| TrialTrace {
            states: vec![row],
            seed_nodes: seeds(&[0]),
            rng_seed: 0,
            stopped_at: None,
        };
        let a = mk(vec![true, false, false, false, false]);
        let b = mk(vec![true, true, true, false, false]);
        let agg = aggregate(&[a, b]).unwrap();
        assert!((agg.mean[0] - 0.4).abs() < 1e-15);
        assert!((agg.stderr[0] - 0.2).abs() < 1e-12);

        let certain = DynamicsParams::product(1.0, 0.0).unwrap();
        let traces = run_trials(&g, &seeds(&[0]), &certain, 3, 77, 200).unwrap();
        assert_eq!(aggregate(&traces).unwrap().mean[1], 1.0);
    }

    #[test]
    fn shape_mismatch_and_empty() {
        let g = make_star(4).unwrap();
        let p = DynamicsParams::product(0.4, 0.1).unwrap();
        let a = run_trial(&g, &seeds(&[0]), &p, 4, 3).unwrap();
        let b = run_trial(&g, &seeds(&[0]), &p, 5, 3).unwrap();
        assert!(matches!(aggregate(&[a.clone(), b]), Err(Error::ShapeMismatch { .. })));
        assert_eq!(aggregate(&[]), Err(Error::EmptyTraces));
        assert!(empirical_state(&[]).is_err());
    }

    #[test]
    fn empirical_state_examples() {
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(0.0, 0.0).unwrap();
        let traces = run_trials(&g, &seeds(&[0]), &p, 4, 1, 20).unwrap();
        let freq = empirical_state(&traces).unwrap();
        assert_eq!(freq[0], vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        for row in &freq {
            assert_eq!(row, &freq[0]);
        }
    }

    #[test]
    fn leaf_frequency_matches_binomial() {
        // X_leaf(1) ~ Bernoulli(0.5); with R = 2000 the 3-sigma band is
        // 3 * sqrt(0.25 / 2000) ~ 0.0335.
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(0.5, 0.0).unwrap();
        let traces = run_trials(&g, &seeds(&[0]), &p, 1, 2024, 2000).unwrap();
        let freq = empirical_state(&traces).unwrap();
        for leaf in 1..5 {
            assert!((freq[1][leaf] - 0.5).abs() <= 0.03, "leaf {leaf}: {}", freq[1][leaf]);
        }
    }
}
