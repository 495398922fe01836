use std::collections::BTreeSet;
use std::fs;

use cascade_core::adversary::{PackagingTable, PolicyName};
use cascade_core::dynamics::DynamicsParams;
use cascade_core::governance::PolicyKind;
use cascade_core::{TopologyConfig, TopologyKind};
use cascade_harness::config::{AttackConfig, DefenseConfig, ImpactConfig, TargetSpec};
use cascade_harness::experiment::{
    ablation_suite, impact_factor, packaging_sweep, prepare, run_experiment, PACKAGING_GAP, PACKAGING_SATURATION,
};
use cascade_harness::{emit_report, ExperimentConfig, Format, HarnessError};

fn attacked(kind: TopologyKind, trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        TopologyConfig::new(kind, 5),
        DynamicsParams::product(0.3, 0.3).unwrap(),
        trials,
        8,
    );
    cfg.attack = Some(AttackConfig::new(PolicyName::SecurityFud, TargetSpec::default()));
    cfg.defense = Some(DefenseConfig::governed(PolicyKind::Balanced));
    cfg.master_seed = 11;
    cfg
}

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let cfg = attacked(TopologyKind::Complete, 12);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&run_experiment(&cfg).unwrap(), a.path(), Format::Csv).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let report = single.install(|| run_experiment(&cfg).unwrap());
    emit_report(&report, b.path(), Format::Csv).unwrap();
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    assert!(fa.len() > 3);
    assert_eq!(fa, fb);
}

#[test]
fn single_run_writes_one_row_and_full_coverage_table() {
    let cfg = attacked(TopologyKind::Star, 1);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&run_experiment(&cfg).unwrap(), dir.path(), Format::Csv).unwrap();
    let runs = fs::read_to_string(dir.path().join("star_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    assert!(runs.starts_with("run_id,policy,defense,asr_flag,consensus_round,final_coverage"));
    let cov = fs::read_to_string(dir.path().join("star_coverage.csv")).unwrap();
    assert_eq!(cov.lines().count(), 1 + cfg.horizon + 1);
    assert!(files.iter().any(|p| p.ends_with("star_traces/run_0000.jsonl")));
}

#[test]
fn jsonl_summary_has_one_object_per_run() {
    let cfg = attacked(TopologyKind::Star, 3);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&run_experiment(&cfg).unwrap(), dir.path(), Format::Jsonl).unwrap();
    let text = fs::read_to_string(dir.path().join("star_runs.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("asr_flag").is_some());
    }
}

#[test]
fn asr_and_bicr_are_complementary() {
    let report = run_experiment(&attacked(TopologyKind::Complete, 20)).unwrap();
    assert_eq!(report.asr + report.bicr, 1.0);
    let flagged = report.runs.iter().filter(|r| r.asr_flag).count();
    assert_eq!(report.asr, flagged as f64 / 20.0);
}

#[test]
fn graybox_target_defaults_the_hub_set() {
    let prep = prepare(&attacked(TopologyKind::Star, 1)).unwrap();
    assert_eq!(prep.target, Some(0));
    let cascade_core::run::Defense::Governed { policy, .. } = prep.defense else {
        panic!("expected governed defense");
    };
    assert_eq!(policy.hub_set, BTreeSet::from([0]));
}

#[test]
fn blackbox_target_is_a_valid_agent() {
    let mut cfg = attacked(TopologyKind::Star, 1);
    cfg.attack.as_mut().unwrap().target = TargetSpec::Rule(cascade_harness::config::TargetRule::AutoBlackbox);
    assert_eq!(prepare(&cfg).unwrap().target, Some(0));
}

#[test]
fn impact_factor_rejects_identical_nodes() {
    let cfg = attacked(TopologyKind::Star, 4);
    assert!(matches!(impact_factor(&cfg, 2, 2), Err(HarnessError::Core(_))));
}

#[test]
fn impact_factor_saturates_to_one() {
    let mut cfg = ExperimentConfig::new(
        TopologyConfig::new(TopologyKind::Star, 5),
        DynamicsParams::product(1.0, 0.0).unwrap(),
        10,
        6,
    );
    cfg.impact = Some(ImpactConfig { hub: 0, leaf: 3 });
    let f = run_experiment(&cfg).unwrap().impact_factor.unwrap();
    assert_eq!((f.hub_mean, f.leaf_mean, f.ratio), (1.0, 1.0, 1.0));
    assert!(!f.infinite);
}

#[test]
fn impact_factor_flags_a_silent_leaf() {
    let mut cfg = ExperimentConfig::new(
        TopologyConfig::new(TopologyKind::Chain, 5),
        DynamicsParams::product(0.5, 1.0).unwrap(),
        10,
        3,
    );
    cfg.seeds = BTreeSet::from([0]);
    // The chain tail has no out-edges and recovers immediately.
    let f = impact_factor(&cfg, 0, 4).unwrap();
    assert!(f.infinite);
    assert!(f.ratio.is_infinite());
}

#[test]
fn ablation_needs_a_governed_defense() {
    let mut cfg = attacked(TopologyKind::Star, 2);
    cfg.defense = None;
    assert!(matches!(ablation_suite(&cfg), Err(HarnessError::Invalid(_))));
    cfg.defense = Some(DefenseConfig::governed(PolicyKind::LowIntervention));
    let labels: Vec<String> = ablation_suite(&cfg).unwrap().into_iter().map(|r| r.defense).collect();
    assert_eq!(
        labels,
        ["strict", "strict/no_atomization", "strict/no_detection", "strict/no_blocking", "none"]
    );
}

#[test]
fn polluted_rounds_table_covers_each_intervention() {
    let report = run_experiment(&attacked(TopologyKind::Complete, 4)).unwrap();
    let rows = report.polluted_rounds.unwrap();
    assert_eq!(rows.len(), 4 * 3);
    assert_eq!(rows.iter().map(|r| r.intervention_t).take(3).collect::<Vec<_>>(), [2, 4, 6]);
}

#[test]
fn default_packaging_matches_the_sweep() {
    let sweep = packaging_sweep(200, 50, 0).unwrap();
    assert_eq!(sweep.table(), Some(PackagingTable::default()));
    let point = |m: (f64, f64)| {
        sweep
            .points
            .iter()
            .find(|p| (p.beta_multiplier, p.delta_multiplier) == m)
            .unwrap()
            .clone()
    };
    let table = PackagingTable::default();
    let (c, f) = (point(table.compliance), point(table.security_fud));
    assert!(c.star_asr - sweep.baseline_asr >= PACKAGING_GAP);
    assert!(f.star_asr - sweep.baseline_asr >= PACKAGING_GAP);
    assert!(f.complete_asr >= PACKAGING_SATURATION);
}
