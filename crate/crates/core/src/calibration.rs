//! Fitting `(beta, delta)` to an observed coverage series.
//!
//! The model starts homogeneously at the first observed interaction round,
//! `s_i(0) = S_obs(1)`, and its step `t` is compared with observed round
//! `t + 1` for `t = 1..T-1`. Parameters are chosen by a coarse scan of the unit
//! square followed by a fine scan around the coarse optimum.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, DynamicsParams, InfectionForm, StateVector, Trajectory};
use crate::graph::DirectedGraph;
use crate::montecarlo::AggregateSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub coarse_step: f64,
    pub fine_radius: f64,
    pub fine_step: f64,
    pub form: InfectionForm,
    /// Keep every evaluated `(beta, delta, mse)` in the result.
    #[serde(default)]
    pub keep_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            coarse_step: 0.05,
            fine_radius: 0.05,
            fine_step: 0.01,
            form: InfectionForm::Product,
            keep_trace: false,
        }
    }
}

impl FitConfig {
    pub fn with_form(form: InfectionForm) -> Self {
        Self {
            form,
            ..Self::default()
        }
    }

    /// Integer lattice `(denominator, coarse stride, fine radius)` in units of
    /// `fine_step`. Working on integers keeps grid values bit-identical to
    /// literals such as `0.3`.
    fn lattice(&self) -> Result<(u32, u32, u32)> {
        let as_units = |x: f64, name: &'static str| -> Result<u32> {
            let units = libm::round(x);
            if !(units >= 1.0) || libm::fabs(units - x) > 1e-9 {
                return Err(Error::OutOfRange { name, value: x });
            }
            Ok(units as u32)
        };
        if !(self.fine_step > 0.0 && self.fine_step <= 1.0) {
            return Err(Error::OutOfRange { name: "fine_step", value: self.fine_step });
        }
        let denom = as_units(1.0 / self.fine_step, "fine_step")?;
        let d = f64::from(denom);
        let stride = as_units(self.coarse_step * d, "coarse_step")?;
        let radius = as_units(self.fine_radius * d, "fine_radius")?;
        Ok((denom, stride, radius))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub beta: f64,
    pub delta: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: f64,
    pub delta: f64,
    pub mse: f64,
    pub form: InfectionForm,
    /// Predicted coverage at the last observed round.
    pub final_coverage: f64,
    /// Best point of the coarse stage.
    pub coarse: GridPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<GridPoint>>,
}

impl FitResult {
    pub fn params(&self) -> DynamicsParams {
        DynamicsParams {
            beta: self.beta,
            delta: self.delta,
            form: self.form,
            dt: 1.0,
        }
    }
}

fn check_obs(obs: &AggregateSeries) -> Result<usize> {
    let rounds = obs.horizon();
    if rounds < 2 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: obs.mean.len(),
        });
    }
    if let Some((index, &value)) = obs.mean.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::StateEntry { index, value });
    }
    Ok(rounds)
}

fn predicted(g: &DirectedGraph, obs: &AggregateSeries, p: &DynamicsParams) -> Vec<f64> {
    let s0 = vec![obs.mean[1]; g.n()];
    dynamics::coverage_series(g, &s0, p, obs.horizon() - 1)
}

fn mse_of(pred: &[f64], obs: &[f64]) -> f64 {
    // pred[t] pairs with obs[t + 1] for t = 1..T-1.
    let terms = pred.len() - 1;
    (1..pred.len())
        .map(|t| {
            let r = pred[t] - obs[t + 1];
            r * r
        })
        .sum::<f64>()
        / terms as f64
}

/// Mean squared error of the aligned model trajectory against `obs`.
pub fn mse_objective(
    g: &DirectedGraph,
    obs: &AggregateSeries,
    beta: f64,
    delta: f64,
    form: InfectionForm,
) -> Result<f64> {
    check_obs(obs)?;
    let p = DynamicsParams::new(beta, delta, form)?;
    Ok(mse_of(&predicted(g, obs, &p), &obs.mean))
}

/// Two-stage grid search. Ties go to the lower `beta`, then the lower `delta`.
pub fn fit(g: &DirectedGraph, obs: &AggregateSeries, cfg: &FitConfig) -> Result<FitResult> {
    check_obs(obs)?;
    let (denom, stride, radius) = cfg.lattice()?;
    let d = f64::from(denom);
    let mut trace = cfg.keep_trace.then(Vec::new);

    let mut eval = |kb: u32, kd: u32| -> GridPoint {
        let p = DynamicsParams {
            beta: f64::from(kb) / d,
            delta: f64::from(kd) / d,
            form: cfg.form,
            dt: 1.0,
        };
        let point = GridPoint {
            beta: p.beta,
            delta: p.delta,
            mse: mse_of(&predicted(g, obs, &p), &obs.mean),
        };
        if let Some(t) = trace.as_mut() {
            t.push(point);
        }
        point
    };

    // Candidates are visited in (beta, delta) ascending order and only a
    // strictly lower mse replaces the incumbent.
    let mut best: Option<(u32, u32, GridPoint)> = None;
    let consider = |kb: u32, kd: u32, point: GridPoint, best: &mut Option<(u32, u32, GridPoint)>| {
        if best.as_ref().is_none_or(|(_, _, b)| point.mse < b.mse) {
            *best = Some((kb, kd, point));
        }
    };

    for kb in (0..=denom).step_by(stride as usize) {
        for kd in (0..=denom).step_by(stride as usize) {
            let point = eval(kb, kd);
            consider(kb, kd, point, &mut best);
        }
    }
    let (cb, cd, coarse) = best.expect("coarse grid is nonempty");

    let span = |c: u32| c.saturating_sub(radius)..=(c + radius).min(denom);
    let mut fine_best = None;
    for kb in span(cb) {
        for kd in span(cd) {
            let point = eval(kb, kd);
            consider(kb, kd, point, &mut fine_best);
        }
    }
    let (_, _, win) = fine_best.expect("fine grid contains the coarse optimum");

    let params = DynamicsParams {
        beta: win.beta,
        delta: win.delta,
        form: cfg.form,
        dt: 1.0,
    };
    let final_coverage = *predicted(g, obs, &params).last().expect("nonempty");
    Ok(FitResult {
        beta: win.beta,
        delta: win.delta,
        mse: win.mse,
        form: cfg.form,
        final_coverage,
        coarse,
        trace,
    })
}

/// Model trajectory from `init` under the fitted parameters.
pub fn predict(g: &DirectedGraph, fit: &FitResult, init: &StateVector, rounds: usize) -> Result<Trajectory> {
    dynamics::simulate(g, init, &fit.params(), rounds)
}

/// Trajectory under the fitting protocol: homogeneous start at `S_obs(1)`,
/// `T - 1` steps, so `coverage[t]` predicts observed round `t + 1`.
pub fn predict_aligned(g: &DirectedGraph, fit: &FitResult, obs: &AggregateSeries) -> Result<Trajectory> {
    let rounds = check_obs(obs)?;
    let init = StateVector::uniform(g.n(), obs.mean[1])?;
    predict(g, fit, &init, rounds - 1)
}

/// Noise-free observation series generated by the fitting protocol itself:
/// `S_obs(0) = 1/n`, `S_obs(1) = first_round`, and `S_obs(t + 1)` equal to the
/// homogeneous model's coverage at step `t`.
pub fn synthetic_observation(
    g: &DirectedGraph,
    p: &DynamicsParams,
    first_round: f64,
    rounds: usize,
) -> Result<AggregateSeries> {
    if rounds < 2 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: rounds + 1,
        });
    }
    p.validate()?;
    let init = StateVector::uniform(g.n(), first_round)?;
    let model = dynamics::coverage_series(g, &init.s, p, rounds - 1);
    let mut mean = Vec::with_capacity(rounds + 1);
    mean.push(1.0 / g.n() as f64);
    mean.extend(model);
    Ok(AggregateSeries::exact(mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_chain, make_complete, make_star};

    #[test]
    fn self_consistent_series_has_zero_mse() {
        let g = make_complete(5).unwrap();
        let p = DynamicsParams::product(0.37, 0.025).unwrap();
        let obs = synthetic_observation(&g, &p, 0.3, 5).unwrap();
        let mse = mse_objective(&g, &obs, 0.37, 0.025, InfectionForm::Product).unwrap();
        assert!(mse.abs() <= 1e-12);
    }

    #[test]
    fn zero_beta_matches_decay_oracle() {
        let g = make_star(5).unwrap();
        let obs = AggregateSeries::exact(vec![0.2, 0.36, 0.5, 0.7, 0.85, 0.93]);
        let delta = 0.1;
        // Closed form: S_pred(t) = S_obs(1) (1 - delta)^t.
        let mut expected = 0.0;
        for t in 1..5 {
            let pred = 0.36 * libm::pow(1.0 - delta, t as f64);
            expected += (pred - obs.mean[t + 1]) * (pred - obs.mean[t + 1]);
        }
        expected /= 4.0;
        let mse = mse_objective(&g, &obs, 0.0, delta, InfectionForm::Product).unwrap();
        assert!((mse - expected).abs() < 1e-15);
    }

    #[test]
    fn optimum_is_locally_minimal() {
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(0.42, 0.07).unwrap();
        let obs = synthetic_observation(&g, &p, 0.36, 6).unwrap();
        let at = mse_objective(&g, &obs, 0.42, 0.07, InfectionForm::Product).unwrap();
        for beta in [0.41, 0.43] {
            assert!(mse_objective(&g, &obs, beta, 0.07, InfectionForm::Product).unwrap() >= at);
        }
    }

    #[test]
    fn insufficient_data() {
        let g = make_star(5).unwrap();
        let obs = AggregateSeries::exact(vec![0.2, 0.4]);
        assert!(matches!(
            mse_objective(&g, &obs, 0.5, 0.1, InfectionForm::Product),
            Err(Error::InsufficientData { .. })
        ));
        assert!(fit(&g, &obs, &FitConfig::default()).is_err());
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let g = make_complete(5).unwrap();
        let p = DynamicsParams::product(0.40, 0.05).unwrap();
        let obs = synthetic_observation(&g, &p, 0.25, 5).unwrap();
        let fit = fit(&g, &obs, &FitConfig::default()).unwrap();
        assert_eq!((fit.beta, fit.delta), (0.40, 0.05));
        assert!(fit.mse <= 1e-12);
        assert!(fit.mse <= fit.coarse.mse);
    }

    #[test]
    fn fine_grid_is_clipped_and_traced() {
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(1.0, 0.0).unwrap();
        let obs = synthetic_observation(&g, &p, 0.5, 5).unwrap();
        let cfg = FitConfig {
            keep_trace: true,
            ..FitConfig::default()
        };
        let fit = fit(&g, &obs, &cfg).unwrap();
        assert_eq!((fit.beta, fit.delta), (1.0, 0.0));
        let trace = fit.trace.unwrap();
        // 21 x 21 coarse plus a 6 x 6 clipped corner.
        assert_eq!(trace.len(), 441 + 36);
        assert!(trace.iter().all(|q| (0.0..=1.0).contains(&q.beta) && (0.0..=1.0).contains(&q.delta)));
    }

    #[test]
    fn predict_reproduces_noiseless_series() {
        let g = make_star(5).unwrap();
        let p = DynamicsParams::product(0.6, 0.1).unwrap();
        let obs = synthetic_observation(&g, &p, 0.4, 5).unwrap();
        let fit = fit(&g, &obs, &FitConfig::default()).unwrap();
        let traj = predict_aligned(&g, &fit, &obs).unwrap();
        for t in 1..traj.coverage.len() {
            assert!((traj.coverage[t] - obs.mean[t + 1]).abs() < 1e-12);
        }
        assert!((fit.final_coverage - obs.mean[5]).abs() < 1e-12);
    }

    #[test]
    fn full_decay_collapses() {
        let g = make_chain(5).unwrap();
        let fit = FitResult {
            beta: 0.7,
            delta: 1.0,
            mse: 0.0,
            form: InfectionForm::Product,
            final_coverage: 0.0,
            coarse: GridPoint { beta: 0.7, delta: 1.0, mse: 0.0 },
            trace: None,
        };
        let init = StateVector::uniform(5, 0.3).unwrap();
        // Full decay leaves only what upstream agents re-infect, and the chain
        // head has no upstream, so the mass drains out one hop per round.
        let traj = predict(&g, &fit, &init, 5).unwrap();
        assert!(traj.coverage[1] < traj.coverage[0]);
        assert_eq!(traj.final_coverage(), 0.0);
        let no_beta = FitResult { beta: 0.0, ..fit };
        let traj = predict(&g, &no_beta, &init, 2).unwrap();
        assert_eq!(traj.coverage[1], 0.0);
    }

    #[test]
    fn rejects_bad_lattice() {
        let g = make_star(5).unwrap();
        let obs = AggregateSeries::exact(vec![0.2, 0.4, 0.6, 0.7]);
        let cfg = FitConfig {
            coarse_step: 0.033,
            ..FitConfig::default()
        };
        assert!(fit(&g, &obs, &cfg).is_err());
    }
}
