//! Individual-based mean-field dynamics of a single tracked falsehood.
//!
//! One round maps `s_i -> (1 - delta) s_i + (1 - s_i) f_i`, where `f_i` is the
//! probability that at least one upstream neighbor induces adoption.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{DirectedGraph, SpectralSummary};
use crate::{Error, Result};

/// Default threshold below which `beta * rho / delta` is not reported.
pub const DEFAULT_DELTA_FLOOR: f64 = 1e-3;
/// Default false-consensus threshold.
pub const DEFAULT_TAU: f64 = 0.75;
/// Default number of consecutive rounds above `tau`.
pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectionForm {
    /// `1 - prod_j (1 - beta a_ij s_j)`: independent per-neighbor attempts.
    #[default]
    Product,
    /// `1 - exp(-beta dt sum_j a_ij s_j)`: summed hazards.
    Poisson,
}

impl InfectionForm {
    pub const fn as_str(self) -> &'static str {
        match self {
            InfectionForm::Product => "product",
            InfectionForm::Poisson => "poisson",
        }
    }
}

impl core::fmt::Display for InfectionForm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for InfectionForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(InfectionForm::Product),
            "poisson" => Ok(InfectionForm::Poisson),
            other => Err(Error::InvalidConfig(alloc::format!("unknown infection form `{other}`"))),
        }
    }
}

fn default_dt() -> f64 {
    1.0
}

/// Transmission probability, decay rate, infection form, and step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub beta: f64,
    pub delta: f64,
    #[serde(default)]
    pub form: InfectionForm,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl DynamicsParams {
    pub fn new(beta: f64, delta: f64, form: InfectionForm) -> Result<Self> {
        let p = Self {
            beta,
            delta,
            form,
            dt: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn product(beta: f64, delta: f64) -> Result<Self> {
        Self::new(beta, delta, InfectionForm::Product)
    }

    pub fn validate(&self) -> Result<()> {
        // beta = 0 is admitted: calibration grids and the no-propagation
        // control both need it.
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::OutOfRange { name: "beta", value: self.beta });
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::OutOfRange { name: "delta", value: self.delta });
        }
        if !(self.dt > 0.0) {
            return Err(Error::OutOfRange { name: "dt", value: self.dt });
        }
        Ok(())
    }
}

/// Adoption probabilities at a given round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub s: Vec<f64>,
    pub t: usize,
}

impl StateVector {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        for (index, &value) in s.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::StateEntry { index, value });
            }
        }
        Ok(Self { s, t: 0 })
    }

    pub fn zeros(n: usize) -> Self {
        Self { s: vec![0.0; n], t: 0 }
    }

    /// `eps` mass on agent `v`, zero elsewhere.
    pub fn point(n: usize, v: usize, eps: f64) -> Result<Self> {
        if v >= n {
            return Err(Error::IndexOutOfRange { index: v, n });
        }
        let mut s = vec![0.0; n];
        s[v] = eps;
        Self::new(s)
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn coverage(&self) -> f64 {
        coverage(&self.s)
    }

    fn check_for(&self, g: &DirectedGraph) -> Result<()> {
        if self.s.len() != g.n() {
            return Err(Error::StateLength { got: self.s.len(), n: g.n() });
        }
        Ok(())
    }
}

/// Unweighted mean over all agents.
pub fn coverage(s: &[f64]) -> f64 {
    if s.is_empty() {
        0.0
    } else {
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// States for rounds `0..=T` and their coverage series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub coverage: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage.last().copied().unwrap_or(0.0)
    }

    pub fn false_consensus(&self, tau: f64, w: usize) -> Option<usize> {
        detect_false_consensus(&self.coverage, tau, w)
    }
}

/// `1 - prod (1 - beta x_j)` over upstream states `x_j`. Empty input gives 0.
pub fn product_adoption(beta: f64, upstream: impl IntoIterator<Item = f64>) -> f64 {
    let miss: f64 = upstream.into_iter().map(|x| 1.0 - beta * x).product();
    1.0 - miss
}

/// `1 - exp(-beta dt pressure)`.
pub fn poisson_adoption(beta: f64, dt: f64, pressure: f64) -> f64 {
    -libm::expm1(-beta * dt * pressure)
}

fn check_agent(g: &DirectedGraph, s: &StateVector, i: usize) -> Result<()> {
    s.check_for(g)?;
    g.check(i)
}

/// Product-form adoption probability of agent `i`.
pub fn infection_product(g: &DirectedGraph, s: &StateVector, p: &DynamicsParams, i: usize) -> Result<f64> {
    check_agent(g, s, i)?;
    Ok(product_adoption(p.beta, g.ins(i).iter().map(|&j| s.s[j])))
}

/// Poisson-form adoption probability of agent `i`.
pub fn infection_poisson(g: &DirectedGraph, s: &StateVector, p: &DynamicsParams, i: usize) -> Result<f64> {
    check_agent(g, s, i)?;
    let pressure: f64 = g.ins(i).iter().map(|&j| s.s[j]).sum();
    Ok(poisson_adoption(p.beta, p.dt, pressure))
}

fn adoption(g: &DirectedGraph, s: &[f64], p: &DynamicsParams, i: usize) -> f64 {
    match p.form {
        InfectionForm::Product => product_adoption(p.beta, g.ins(i).iter().map(|&j| s[j])),
        InfectionForm::Poisson => {
            let pressure: f64 = g.ins(i).iter().map(|&j| s[j]).sum();
            poisson_adoption(p.beta, p.dt, pressure)
        }
    }
}

pub(crate) fn step_into(g: &DirectedGraph, s: &[f64], p: &DynamicsParams, out: &mut [f64]) {
    for (i, next) in out.iter_mut().enumerate() {
        let f = adoption(g, s, p, i);
        *next = (1.0 - p.delta) * s[i] + (1.0 - s[i]) * f;
        debug_assert!((0.0..=1.0).contains(next), "s[{i}] = {next} left [0, 1]");
    }
}

/// One synchronous round of the mean-field update.
pub fn step(g: &DirectedGraph, s: &StateVector, p: &DynamicsParams) -> Result<StateVector> {
    s.check_for(g)?;
    p.validate()?;
    let mut next = vec![0.0; g.n()];
    step_into(g, &s.s, p, &mut next);
    Ok(StateVector { s: next, t: s.t + 1 })
}

/// Iterates [`step`] `rounds` times from `s0`.
pub fn simulate(g: &DirectedGraph, s0: &StateVector, p: &DynamicsParams, rounds: usize) -> Result<Trajectory> {
    if rounds == 0 {
        return Err(Error::InvalidConfig("simulation needs at least one round".into()));
    }
    s0.check_for(g)?;
    p.validate()?;
    let mut states = Vec::with_capacity(rounds + 1);
    let mut coverage_series = Vec::with_capacity(rounds + 1);
    states.push(s0.clone());
    coverage_series.push(s0.coverage());
    for _ in 0..rounds {
        let prev = states.last().expect("nonempty");
        let mut next = vec![0.0; g.n()];
        step_into(g, &prev.s, p, &mut next);
        let sv = StateVector { s: next, t: prev.t + 1 };
        coverage_series.push(sv.coverage());
        states.push(sv);
    }
    Ok(Trajectory {
        states,
        coverage: coverage_series,
    })
}

/// Coverage-only simulation without storing states; used by the fitting loop.
pub(crate) fn coverage_series(g: &DirectedGraph, s0: &[f64], p: &DynamicsParams, rounds: usize) -> Vec<f64> {
    let mut cur = s0.to_vec();
    let mut next = vec![0.0; cur.len()];
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(coverage(&cur));
    for _ in 0..rounds {
        step_into(g, &cur, p, &mut next);
        core::mem::swap(&mut cur, &mut next);
        out.push(coverage(&cur));
    }
    out
}

/// Earliest round `t` such that coverage stays strictly above `tau` for
/// rounds `t..t + w`. `None` if never sustained or `w` exceeds the series.
pub fn detect_false_consensus(coverage: &[f64], tau: f64, w: usize) -> Option<usize> {
    if w == 0 || w > coverage.len() {
        return None;
    }
    let mut run = 0;
    for (t, &c) in coverage.iter().enumerate() {
        if c > tau {
            run += 1;
            if run == w {
                return Some(t + 1 - w);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// `beta * rho / delta`, or ill-conditioned when `delta` is below the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RiskCriterion {
    Ratio(f64),
    IllConditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// `(1 - delta) + beta * rho`.
    pub growth_factor: f64,
    /// `beta * rho > delta`.
    pub amplifying: bool,
    pub criterion: RiskCriterion,
    pub delta_floor: f64,
}

/// Early-stage amplification diagnostic from the linearized dynamics.
pub fn risk_report(p: &DynamicsParams, spectrum: &SpectralSummary, delta_floor: f64) -> RiskReport {
    let transmission = p.beta * spectrum.rho;
    let criterion = if p.delta >= delta_floor && p.delta > 0.0 {
        RiskCriterion::Ratio(transmission / p.delta)
    } else {
        RiskCriterion::IllConditioned
    };
    RiskReport {
        growth_factor: (1.0 - p.delta) + transmission,
        amplifying: transmission > p.delta,
        criterion,
        delta_floor,
    }
}

/// Mass growth over the first `rounds` rounds from an `eps` seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyGrowth {
    pub seed_node: usize,
    /// `||s(t)||_1 / ||s(0)||_1`.
    pub l1_ratio: f64,
    /// Same ratio with agents weighted by the left Perron vector of `A`,
    /// which grows exactly like the linearized growth factor to the power
    /// `rounds`. Falls back to `l1_ratio` when the vector is undefined.
    pub perron_ratio: f64,
}

/// Seeds `eps` on the agent with the largest principal-eigenvector entry and
/// measures early growth. `left` is the spectral summary of the transposed
/// graph (left eigenvector of `A`).
pub fn early_growth(
    g: &DirectedGraph,
    p: &DynamicsParams,
    right: &SpectralSummary,
    left: &SpectralSummary,
    eps: f64,
    rounds: usize,
) -> Result<EarlyGrowth> {
    let seed_node = right.argmax().unwrap_or(0);
    let s0 = StateVector::point(g.n(), seed_node, eps)?;
    let traj = simulate(g, &s0, p, rounds)?;
    let end = &traj.states[rounds].s;
    let l1_ratio = end.iter().sum::<f64>() / eps;
    let perron_ratio = match &left.u1 {
        Some(w) if w[seed_node] > 0.0 => {
            let mass: f64 = w.iter().zip(end).map(|(a, b)| a * b).sum();
            mass / (w[seed_node] * eps)
        }
        _ => l1_ratio,
    };
    Ok(EarlyGrowth {
        seed_node,
        l1_ratio,
        perron_ratio,
    })
}
