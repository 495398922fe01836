use std::collections::BTreeSet;

use cascade_core::adversary::{
    graybox_target, inject, package_seed, select_target_blackbox, AttackPolicy, InjectionSpec, PackagingTable,
    PolicyName,
};
use cascade_core::calibration::{fit, FitConfig, FitResult};
use cascade_core::dynamics::{detect_false_consensus, DynamicsParams, InfectionForm};
use cascade_core::governance::{Ablation, OracleConfig, PolicyKind};
use cascade_core::graph::DirectedGraph;
use cascade_core::montecarlo::{aggregate, run_trial, AggregateSeries, TrialTrace};
use cascade_core::rng::derive_seed;
use cascade_core::run::{attack_success, execute, polluted_rounds, Defense, RunConfig, RunOutcome, Sink};
use cascade_core::{TopologyConfig, TopologyKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AttackConfig, DefenseConfig, ExperimentConfig, TargetRule, TargetSpec};
use crate::error::{HarnessError, Result};
use crate::report::{FitRow, ImpactFactor, PollutedRow, Report, RunRow};

/// Substream offset for the black-box attacker's reconnaissance trials, kept
/// away from the run indices.
const RECON_STREAM: u64 = 1 << 40;
const RECON_TRIALS: usize = 40;

/// Everything derived from a config before the runs start.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub run: RunConfig,
    pub defense: Defense,
    pub sink: Sink,
    pub target: Option<usize>,
    pub attack_policy: String,
}

/// Benign trials an outside observer could log: each seeds one agent in turn.
pub fn recon_traces(g: &DirectedGraph, p: &DynamicsParams, horizon: usize, master_seed: u64) -> Result<Vec<TrialTrace>> {
    (0..RECON_TRIALS)
        .map(|r| {
            let seeds = BTreeSet::from([r % g.n()]);
            let seed = derive_seed(master_seed, RECON_STREAM + r as u64);
            Ok(run_trial(g, &seeds, p, horizon, seed)?)
        })
        .collect()
}

pub fn resolve_target(cfg: &ExperimentConfig, g: &DirectedGraph, attack: &AttackConfig) -> Result<usize> {
    Ok(match attack.target {
        TargetSpec::Index(t) => {
            g.check(t)?;
            t
        }
        TargetSpec::Rule(TargetRule::AutoGraybox) => graybox_target(g),
        TargetSpec::Rule(TargetRule::AutoBlackbox) => {
            let traces = recon_traces(g, &cfg.dynamics, cfg.horizon, cfg.master_seed)?;
            select_target_blackbox(&traces, Some(g))?
        }
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let g = cfg.topology.build()?;
    let base = RunConfig::new(g.clone(), cfg.dynamics, cfg.seeds.clone(), cfg.horizon)?;
    let (run, target, attack_policy) = match &cfg.attack {
        Some(a) => {
            let target = resolve_target(cfg, &g, a)?;
            let packaged = package_seed(a.seed_claim(), a.policy.as_str(), &cfg.packaging)?;
            let run = inject(base, &InjectionSpec::new(target, packaged))?;
            (run, Some(target), a.policy.to_string())
        }
        None => {
            let target = (cfg.seeds.len() == 1).then(|| *cfg.seeds.first().unwrap());
            (base, target, "none".to_string())
        }
    };
    let hubs = BTreeSet::from([graybox_target(&g)]);
    let defense = cfg.defense.as_ref().map_or(Defense::None, |d| d.resolve(&hubs));
    if let Defense::Governed { policy, .. } = &defense {
        policy.validate(g.n())?;
    }
    let sink = cfg.sink_policy.resolve(&g, target)?;
    Ok(Prepared {
        run,
        defense,
        sink,
        target,
        attack_policy,
    })
}

fn run_all(prep: &Prepared, trials: usize, master_seed: u64) -> Result<Vec<RunOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|r| Ok(execute(&prep.run, &prep.defense, derive_seed(master_seed, r as u64), true)?))
        .collect()
}

/// Runs `cfg.trials` runs of an already prepared arm and assembles its report.
pub fn run_prepared(label: &str, prep: &Prepared, cfg: &ExperimentConfig) -> Result<Report> {
    let outcomes = run_all(prep, cfg.trials, cfg.master_seed)?;
    let defense = prep.defense.label();
    let mut runs = Vec::with_capacity(outcomes.len());
    let mut polluted = Vec::new();
    let tracked = prep.run.tracked_claim().claim_id;
    let interventions = cfg.intervention_times();
    for (run_id, out) in outcomes.iter().enumerate() {
        let curve = out.trace.coverage_series();
        runs.push(RunRow {
            run_id,
            policy: prep.attack_policy.clone(),
            defense: defense.clone(),
            asr_flag: attack_success(&out.trace, prep.sink, cfg.w),
            consensus_round: detect_false_consensus(&curve, cfg.tau, cfg.w),
            final_coverage: out.trace.final_coverage(),
        });
        let log = matches!(prep.defense, Defense::Governed { .. }).then_some((&out.records[..], &tracked));
        for &t in &interventions {
            polluted.push(PollutedRow {
                run_id,
                intervention_t: t,
                polluted_rounds: polluted_rounds(&out.trace, log, t)?,
            });
        }
    }
    let traces: Vec<TrialTrace> = outcomes.iter().map(|o| o.trace.clone()).collect();
    let agg = aggregate(&traces)?;
    let successes = runs.iter().filter(|r| r.asr_flag).count();
    let asr = successes as f64 / runs.len() as f64;
    Ok(Report {
        label: label.to_string(),
        attack_policy: prep.attack_policy.clone(),
        defense,
        asr,
        bicr: 1.0 - asr,
        coverage_curves: traces.iter().map(TrialTrace::coverage_series).collect(),
        coverage: Report::coverage_rows(&agg),
        impact_factor: None,
        polluted_rounds: (!interventions.is_empty()).then_some(polluted),
        fit_table: None,
        traces: outcomes.into_iter().map(|o| o.records).collect(),
        warnings: prep.run.warnings.iter().map(ToString::to_string).collect(),
        runs,
    })
}

/// Executes the configured arm: attack (if any), defense (if any), `trials`
/// runs, plus the impact factor when requested.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let prep = prepare(cfg)?;
    let mut report = run_prepared(&cfg.label(), &prep, cfg)?;
    if let Some(imp) = cfg.impact {
        report.impact_factor = Some(impact_factor(cfg, imp.hub, imp.leaf)?);
    }
    Ok(report)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean final infection seeded at `hub` over mean final infection seeded at
/// `leaf`, with the two arms sharing each trial's seed. Attack packaging from
/// the config is applied to both arms.
pub fn impact_factor(cfg: &ExperimentConfig, hub: usize, leaf: usize) -> Result<ImpactFactor> {
    if hub == leaf {
        return Err(cascade_core::Error::IdenticalNodes(hub).into());
    }
    cfg.validate()?;
    let g = cfg.topology.build()?;
    g.check(hub)?;
    g.check(leaf)?;
    let policy = cfg
        .attack
        .as_ref()
        .map_or(AttackPolicy::BASELINE, |a| cfg.packaging.policy(a.policy));
    let seed = cfg.attack.as_ref().map(AttackConfig::seed_claim).unwrap_or_default();
    let base = RunConfig::new(g.clone(), cfg.dynamics, cfg.seeds.clone(), cfg.horizon)?;
    let arm = |target| {
        inject(
            base.clone(),
            &InjectionSpec {
                target,
                time: 0,
                seed: seed.clone(),
                policy,
            },
        )
    };
    let (hub_cfg, leaf_cfg) = (arm(hub)?, arm(leaf)?);
    let hubs = BTreeSet::from([graybox_target(&g)]);
    let defense = cfg.defense.as_ref().map_or(Defense::None, |d| d.resolve(&hubs));
    let pairs: Vec<(f64, f64)> = (0..cfg.trials)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(cfg.master_seed, r as u64);
            let h = execute(&hub_cfg, &defense, s, false)?.trace.final_coverage();
            let l = execute(&leaf_cfg, &defense, s, false)?.trace.final_coverage();
            Ok((h, l))
        })
        .collect::<Result<_>>()?;
    let (hs, ls): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (hub_mean, hub_stderr) = mean_stderr(&hs);
    let (leaf_mean, leaf_stderr) = mean_stderr(&ls);
    let infinite = leaf_mean == 0.0;
    let ratio = if infinite { f64::INFINITY } else { hub_mean / leaf_mean };
    let ratio_stderr = if infinite || hub_mean == 0.0 {
        f64::NAN
    } else {
        ratio * ((hub_stderr / hub_mean).powi(2) + (leaf_stderr / leaf_mean).powi(2)).sqrt()
    };
    Ok(ImpactFactor {
        hub,
        leaf,
        hub_mean,
        leaf_mean,
        hub_stderr,
        leaf_stderr,
        ratio,
        infinite,
        ratio_stderr,
        trials: cfg.trials,
    })
}

fn governed_oracle(cfg: &ExperimentConfig) -> (OracleConfig, usize, BTreeSet<usize>) {
    match &cfg.defense {
        Some(DefenseConfig::Governed {
            oracle,
            retry_cap,
            hub_set,
            ..
        }) => (*oracle, *retry_cap, hub_set.clone()),
        _ => (OracleConfig::default(), cascade_core::governance::DEFAULT_RETRY_CAP, BTreeSet::new()),
    }
}

fn with_defense(cfg: &ExperimentConfig, defense: DefenseConfig) -> ExperimentConfig {
    ExperimentConfig {
        defense: Some(defense),
        ..cfg.clone()
    }
}

/// Strict policy with each governance component removed in turn, plus no
/// defense at all, all on the same seeds.
pub fn ablation_suite(cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    if !matches!(cfg.defense, Some(DefenseConfig::Governed { .. })) {
        return Err(HarnessError::Invalid("ablation needs a governed defense section".into()));
    }
    let (oracle, retry_cap, hub_set) = governed_oracle(cfg);
    let mut arms: Vec<(String, DefenseConfig)> = Ablation::ALL
        .into_iter()
        .map(|ablation| {
            let d = DefenseConfig::Governed {
                policy: PolicyKind::Strict,
                ablation,
                hub_set: hub_set.clone(),
                retry_cap,
                oracle,
            };
            (ablation.to_string(), d)
        })
        .collect();
    arms.push(("none".into(), DefenseConfig::None));
    arms.into_iter()
        .map(|(name, d)| {
            let c = with_defense(cfg, d);
            run_prepared(&format!("{}/{name}", cfg.label()), &prepare(&c)?, &c)
        })
        .collect()
}

/// No defense, the self-check baseline, and the three governance policies.
pub fn policy_sweep(cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    let (oracle, retry_cap, hub_set) = governed_oracle(cfg);
    let mut arms = vec![
        ("none".to_string(), DefenseConfig::None),
        (
            "reflection".to_string(),
            DefenseConfig::Reflection {
                detect: cascade_core::run::DEFAULT_REFLECTION_DETECT,
            },
        ),
    ];
    for kind in PolicyKind::ALL {
        arms.push((
            kind.to_string(),
            DefenseConfig::Governed {
                policy: kind,
                ablation: Ablation::Full,
                hub_set: hub_set.clone(),
                retry_cap,
                oracle,
            },
        ));
    }
    arms.into_iter()
        .map(|(name, d)| {
            let c = with_defense(cfg, d);
            run_prepared(&format!("{}/{name}", cfg.label()), &prepare(&c)?, &c)
        })
        .collect()
}

/// ASR of each attack policy under the config's defense.
pub fn attack_sweep(cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    let template = cfg
        .attack
        .clone()
        .unwrap_or_else(|| AttackConfig::new(PolicyName::Baseline, TargetSpec::default()));
    PolicyName::ALL
        .into_iter()
        .map(|policy| {
            let c = ExperimentConfig {
                attack: Some(AttackConfig {
                    policy,
                    ..template.clone()
                }),
                ..cfg.clone()
            };
            run_prepared(&format!("{}/{policy}", cfg.label()), &prepare(&c)?, &c)
        })
        .collect()
}

/// Reference dynamics of the packaging sweep.
pub const PACKAGING_REFERENCE: (f64, f64, usize) = (0.3, 0.3, 8);
pub const PACKAGING_BETA_GRID: [f64; 6] = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
pub const PACKAGING_DELTA_GRID: [f64; 6] = [1.0, 0.75, 0.5, 0.25, 0.1, 0.0];
/// Required ASR lead of packaged policies over the baseline on the star.
pub const PACKAGING_GAP: f64 = 0.5;
/// Required undefended ASR of security_fud on the complete graph.
pub const PACKAGING_SATURATION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackagingPoint {
    pub beta_multiplier: f64,
    pub delta_multiplier: f64,
    pub star_asr: f64,
    pub complete_asr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackagingSweep {
    pub baseline_asr: f64,
    pub points: Vec<PackagingPoint>,
    pub compliance: Option<(f64, f64)>,
    pub security_fud: Option<(f64, f64)>,
}

fn reference_cfg(kind: TopologyKind, trials: usize, master_seed: u64) -> ExperimentConfig {
    let (beta, delta, horizon) = PACKAGING_REFERENCE;
    let mut cfg = ExperimentConfig::new(
        TopologyConfig::new(kind, 5),
        DynamicsParams::product(beta, delta).expect("reference dynamics are valid"),
        trials,
        horizon,
    );
    cfg.master_seed = master_seed;
    cfg.interventions = Some(Vec::new());
    cfg
}

fn packaged_asr(kind: TopologyKind, mult: (f64, f64), trials: usize, master_seed: u64) -> Result<f64> {
    let mut cfg = reference_cfg(kind, trials, master_seed);
    let name = if mult == (1.0, 1.0) { PolicyName::Baseline } else { PolicyName::Compliance };
    cfg.packaging.compliance = mult;
    cfg.attack = Some(AttackConfig::new(name, TargetSpec::default()));
    Ok(run_prepared("sweep", &prepare(&cfg)?, &cfg)?.asr)
}

/// Sweeps packaging multipliers at the reference dynamics (star and complete,
/// `n = 5`, no defense). Points are visited from mildest to most aggressive
/// (`beta` multiplier ascending, then `delta` multiplier descending).
/// compliance is the first point whose star ASR leads the baseline by
/// `PACKAGING_GAP`; security_fud is the next point that also saturates the
/// complete graph. Only points that both raise `beta` and lower `delta`
/// qualify.
pub fn packaging_sweep(star_trials: usize, complete_trials: usize, master_seed: u64) -> Result<PackagingSweep> {
    let baseline_asr = packaged_asr(TopologyKind::Star, (1.0, 1.0), star_trials, master_seed)?;
    let grid: Vec<(f64, f64)> = PACKAGING_BETA_GRID
        .iter()
        .flat_map(|&b| PACKAGING_DELTA_GRID.iter().map(move |&d| (b, d)))
        .filter(|&m| m != (1.0, 1.0))
        .collect();
    let points = grid
        .into_par_iter()
        .map(|(b, d)| {
            Ok(PackagingPoint {
                beta_multiplier: b,
                delta_multiplier: d,
                star_asr: packaged_asr(TopologyKind::Star, (b, d), star_trials, master_seed)?,
                complete_asr: packaged_asr(TopologyKind::Complete, (b, d), complete_trials, master_seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let leads = |p: &PackagingPoint| {
        p.beta_multiplier > 1.0 && p.delta_multiplier < 1.0 && p.star_asr - baseline_asr >= PACKAGING_GAP
    };
    let compliance = points.iter().find(|p| leads(p));
    let security_fud = points
        .iter()
        .filter(|p| leads(p) && p.complete_asr >= PACKAGING_SATURATION)
        .find(|p| compliance.is_none_or(|c| *p != c));
    let pair = |p: &PackagingPoint| (p.beta_multiplier, p.delta_multiplier);
    Ok(PackagingSweep {
        baseline_asr,
        compliance: compliance.map(pair),
        security_fud: security_fud.map(pair),
        points,
    })
}

impl PackagingSweep {
    pub fn table(&self) -> Option<PackagingTable> {
        Some(PackagingTable {
            compliance: self.compliance?,
            security_fud: self.security_fud?,
        })
    }
}

/// Operating points the calibration experiments generate trials from, one
/// per preset topology with five agents.
pub fn reference_points() -> Vec<(TopologyConfig, DynamicsParams)> {
    let p = |b, d| DynamicsParams::product(b, d).expect("reference point is valid");
    vec![
        (TopologyConfig::new(TopologyKind::Star, 5), p(0.67, 0.0)),
        (TopologyConfig::new(TopologyKind::Chain, 5), p(0.92, 0.005)),
        (TopologyConfig::layered_horizontal(5, 0.3, 0), p(0.85, 0.02)),
        (TopologyConfig::new(TopologyKind::Complete, 5), p(0.37, 0.025)),
    ]
}

/// Monte Carlo aggregate of `trials` trials, computed in parallel.
pub fn trial_aggregate(
    g: &DirectedGraph,
    seeds: &BTreeSet<usize>,
    p: &DynamicsParams,
    horizon: usize,
    trials: usize,
    master_seed: u64,
) -> Result<(Vec<TrialTrace>, AggregateSeries)> {
    let traces: Vec<TrialTrace> = (0..trials as u64)
        .into_par_iter()
        .map(|r| Ok(run_trial(g, seeds, p, horizon, derive_seed(master_seed, r))?))
        .collect::<Result<_>>()?;
    let agg = aggregate(&traces)?;
    Ok((traces, agg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub topology: TopologyConfig,
    pub observed: AggregateSeries,
    pub product: FitResult,
    pub poisson: FitResult,
}

impl FitOutcome {
    pub fn rows(&self) -> [FitRow; 2] {
        let row = |f: &FitResult| FitRow {
            topology: self.topology.kind.to_string(),
            form: f.form.to_string(),
            beta: f.beta,
            delta: f.delta,
            mse: f.mse,
            final_coverage: f.final_coverage,
        };
        [row(&self.product), row(&self.poisson)]
    }
}

/// Fits both infection forms to Monte Carlo aggregates.
pub fn fit_experiment(
    topology: &TopologyConfig,
    p: &DynamicsParams,
    seeds: &BTreeSet<usize>,
    horizon: usize,
    trials: usize,
    master_seed: u64,
) -> Result<FitOutcome> {
    let g = topology.build()?;
    let (_, observed) = trial_aggregate(&g, seeds, p, horizon, trials, master_seed)?;
    let product = fit(&g, &observed, &FitConfig::with_form(InfectionForm::Product))?;
    let poisson = fit(&g, &observed, &FitConfig::with_form(InfectionForm::Poisson))?;
    Ok(FitOutcome {
        topology: topology.clone(),
        observed,
        product,
        poisson,
    })
}

/// Fits at every reference point (seed at agent 0).
pub fn fit_table(horizon: usize, trials: usize, master_seed: u64) -> Result<Vec<FitOutcome>> {
    reference_points()
        .iter()
        .map(|(topo, p)| fit_experiment(topo, p, &BTreeSet::from([0]), horizon, trials, master_seed))
        .collect()
}
