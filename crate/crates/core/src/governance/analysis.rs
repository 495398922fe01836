use serde::{Deserialize, Serialize};

use super::pipeline::{GovernancePolicy, PolicyKind};
use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};

/// Closed-form fate of a false atom under a policy and its oracle rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptionOutcomes {
    /// Probability one processing pass lets the false atom through.
    pub survive: f64,
    /// Probability the sender drops it within the retry budget.
    pub corrected: f64,
    /// Probability it is eventually delivered, over all passes.
    pub released: f64,
}

/// `n` is the number of agents, used for the hub fraction under `Balanced`.
pub fn interception_outcomes(policy: &GovernancePolicy, n: usize) -> Result<InterceptionOutcomes> {
    if n == 0 {
        return Err(Error::InvalidSize { n, min: 1 });
    }
    policy.validate(n)?;
    let o = &policy.oracle;
    let v = &o.verifier;
    let verify_pass = v.unresolved + (1.0 - v.unresolved) * (1.0 - v.accuracy);
    let verified_share = match policy.kind {
        PolicyKind::LowIntervention => 0.0,
        PolicyKind::Balanced => policy.hub_set.len() as f64 / n as f64,
        PolicyKind::Strict => 1.0,
    };
    let yellow_pass = verified_share * verify_pass + (1.0 - verified_share);
    let s = &o.screening;
    let survive = s.false_green + s.missed_contradiction * yellow_pass;
    let caught = 1.0 - survive;
    let stubborn = caught * (1.0 - o.compliance);
    let k = policy.retry_cap as i32;
    let geometric = |terms: i32| (0..terms).map(|i| libm::pow(stubborn, i as f64)).sum::<f64>();
    Ok(InterceptionOutcomes {
        survive,
        corrected: caught * o.compliance * geometric(k),
        released: survive * geometric(k + 1),
    })
}

/// Governance folded into the mean-field parameters: `beta` is scaled by the
/// single-pass survival probability and recovery gains the per-round
/// correction probability. `None` leaves the parameters unchanged.
pub fn effective_params(base: &DynamicsParams, policy: Option<&GovernancePolicy>, n: usize) -> Result<DynamicsParams> {
    base.validate()?;
    let Some(policy) = policy else {
        return Ok(*base);
    };
    let out = interception_outcomes(policy, n)?;
    Ok(DynamicsParams {
        beta: base.beta * out.survive,
        delta: base.delta + (1.0 - base.delta) * out.corrected,
        ..*base
    })
}
