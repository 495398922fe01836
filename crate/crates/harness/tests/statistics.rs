use std::collections::BTreeSet;

use cascade_core::adversary::{graybox_target, inject, AttackPolicy, InjectionSpec, PolicyName, SeedClaim};
use cascade_core::dynamics::DynamicsParams;
use cascade_core::graph::make_star;
use cascade_core::montecarlo::{aggregate, run_trials};
use cascade_core::run::RunConfig;

fn final_stats(g: &cascade_core::DirectedGraph, seed: usize, p: &DynamicsParams, rounds: usize) -> (f64, f64) {
    let traces = run_trials(g, &BTreeSet::from([seed]), p, rounds, 99, 200).unwrap();
    let agg = aggregate(&traces).unwrap();
    (agg.mean[rounds], agg.stderr[rounds])
}

#[test]
fn graybox_target_outspreads_every_leaf() {
    let g = make_star(5).unwrap();
    let hub = graybox_target(&g);
    assert_eq!(hub, 0);
    for beta in [0.2, 0.4, 0.6, 0.8] {
        let p = DynamicsParams::product(beta, 0.0).unwrap();
        let (h, _) = final_stats(&g, hub, &p, 2);
        for leaf in 1..5 {
            let (l, _) = final_stats(&g, leaf, &p, 2);
            assert!(h - l >= 0.1, "beta {beta}: hub {h} leaf {leaf} {l}");
        }
    }
}

#[test]
fn larger_beta_multiplier_never_lowers_coverage() {
    let g = make_star(5).unwrap();
    let base = RunConfig::new(g, DynamicsParams::product(0.3, 0.3).unwrap(), BTreeSet::from([0]), 8).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for bm in [1.0, 1.5, 2.0, 2.5, 3.0, 3.5] {
        let spec = InjectionSpec {
            target: 0,
            time: 0,
            seed: SeedClaim::default(),
            policy: AttackPolicy {
                name: PolicyName::Compliance,
                beta_multiplier: bm,
                delta_multiplier: 1.0,
            },
        };
        let cfg = inject(base.clone(), &spec).unwrap();
        let cur = final_stats(&cfg.graph, 0, &cfg.params, cfg.rounds);
        if let Some((m, s)) = prev {
            assert!(cur.0 >= m - 2.0 * (s * s + cur.1 * cur.1).sqrt(), "multiplier {bm}: {} after {m}", cur.0);
        }
        prev = Some(cur);
    }
}
