use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascade_core::dynamics::{risk_report, simulate, StateVector};
use cascade_core::governance::{replay_offline, ClaimId, LineageDelta};
use cascade_core::graph::{spectral_summary, DEFAULT_MAX_ITER, DEFAULT_TOL};
use cascade_harness::experiment::{
    ablation_suite, attack_sweep, fit_experiment, packaging_sweep, policy_sweep, run_experiment, trial_aggregate,
};
use cascade_harness::export::{read_trace_log, write_csv, write_fit_records, write_graph_json, write_trajectory_csv, FitRecord, GraphDoc};
use cascade_harness::report::{summary_line, CoverageRow};
use cascade_harness::{emit_report, ExperimentConfig, Format, HarnessError, Report, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "cascade", version, about = "Falsehood cascades in multi-agent graphs: simulate, attack, defend")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the topology and write it with its spectral summary.
    Topo,
    /// Run the mean-field recursion from the config's seed set.
    Simulate,
    /// Run Monte Carlo trials and write the coverage table.
    Trials,
    /// Fit product and Poisson mean-field forms to Monte Carlo aggregates.
    Fit,
    /// Run the configured attack.
    Attack {
        /// Run every attack policy.
        #[arg(long)]
        sweep: bool,
        /// Calibrate the packaging multipliers instead.
        #[arg(long, conflicts_with = "sweep")]
        packaging: bool,
    },
    /// Run the configured defense.
    Defend {
        /// Compare no defense, reflection and every governance policy.
        #[arg(long)]
        all: bool,
    },
    /// Run the strict-policy ablation suite.
    Ablate,
    /// Rebuild lineage and coverage offline from a trace log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Tracked claim; defaults to the config's attack claim.
        #[arg(long)]
        claim: Option<String>,
    },
    /// Run the configured experiment and write every report table.
    Report,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| HarnessError::Invalid("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn emit_all(reports: &[Report], cli: &Cli) -> Result<()> {
    for r in reports {
        emit_report(r, &cli.out, cli.format)?;
        println!("{}", summary_line(r));
        if let Some(f) = &r.impact_factor {
            println!("  impact factor {:.3} (+/- {:.3}) hub {} vs leaf {}", f.ratio, f.ratio_stderr, f.hub, f.leaf);
        }
    }
    Ok(())
}

fn write_rows<T: Serialize>(cli: &Cli, stem: &str, rows: &[T]) -> Result<PathBuf> {
    let path = match cli.format {
        Format::Csv => cli.out.join(format!("{stem}.csv")),
        Format::Jsonl => cli.out.join(format!("{stem}.jsonl")),
    };
    match cli.format {
        Format::Csv => write_csv(&path, rows)?,
        Format::Jsonl => cascade_harness::export::write_jsonl(&path, rows)?,
    }
    Ok(path)
}

#[derive(Serialize)]
struct LineageDoc {
    #[serde(flatten)]
    graph: LineageDelta,
    coverage: Vec<f64>,
    roots: Vec<usize>,
    warnings: usize,
    messages: usize,
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let stem = cfg.label();
    create_dir(&cli.out)?;
    match &cli.command {
        Command::Topo => {
            let g = cfg.topology.build()?;
            let spec = spectral_summary(&g, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let risk = risk_report(&cfg.dynamics, &spec, 0.0);
            println!(
                "n={} edges={} rho={:.6} growth={:.4} amplifying={}",
                g.n(),
                g.edge_count(),
                spec.rho,
                risk.growth_factor,
                risk.amplifying
            );
            let path = cli.out.join(format!("{stem}_graph.json"));
            write_graph_json(&path, &GraphDoc::new(&g, Some(spec)))?;
            println!("{}", path.display());
        }
        Command::Simulate => {
            let g = cfg.topology.build()?;
            let mut s = vec![0.0; g.n()];
            for &v in &cfg.seeds {
                g.check(v)?;
                s[v] = 1.0;
            }
            let traj = simulate(&g, &StateVector::new(s)?, &cfg.dynamics, cfg.horizon)?;
            let path = cli.out.join(format!("{stem}_meanfield.csv"));
            write_trajectory_csv(&path, &traj)?;
            println!("final coverage {:.4}", traj.final_coverage());
            println!("{}", path.display());
        }
        Command::Trials => {
            let g = cfg.topology.build()?;
            let (_, agg) = trial_aggregate(&g, &cfg.seeds, &cfg.dynamics, cfg.horizon, cfg.trials, cfg.master_seed)?;
            let rows: Vec<CoverageRow> = (0..agg.mean.len())
                .map(|t| CoverageRow {
                    t,
                    mean: agg.mean[t],
                    stderr: agg.stderr[t],
                })
                .collect();
            let path = cli.out.join(format!("{stem}_coverage.csv"));
            write_csv(&path, &rows)?;
            println!("final coverage {:.4} over {} trials", agg.mean[agg.mean.len() - 1], agg.trials);
            println!("{}", path.display());
        }
        Command::Fit => {
            let out = fit_experiment(&cfg.topology, &cfg.dynamics, &cfg.seeds, cfg.horizon, cfg.trials, cfg.master_seed)?;
            let rows = out.rows();
            for r in &rows {
                println!("{:<8} beta={:.2} delta={:.3} mse={:.3e}", r.form, r.beta, r.delta, r.mse);
            }
            write_rows(cli, &format!("{stem}_fits"), &rows)?;
            let topology = cfg.topology.kind.to_string();
            let records: Vec<FitRecord> = [out.product, out.poisson]
                .into_iter()
                .map(|fit| FitRecord {
                    topology: topology.clone(),
                    fit,
                })
                .collect();
            write_fit_records(&cli.out.join(format!("{stem}_fit_records.jsonl")), &records)?;
        }
        Command::Attack { sweep: true, .. } => emit_all(&attack_sweep(&cfg)?, cli)?,
        Command::Attack { packaging: true, .. } => {
            let sweep = packaging_sweep(cfg.trials, cfg.trials, cfg.master_seed)?;
            println!("baseline ASR {:.3}", sweep.baseline_asr);
            println!("compliance {:?}", sweep.compliance);
            println!("security_fud {:?}", sweep.security_fud);
            write_rows(cli, "packaging_sweep", &sweep.points)?;
        }
        Command::Attack { .. } | Command::Defend { all: false } | Command::Report => {
            emit_all(&[run_experiment(&cfg)?], cli)?
        }
        Command::Defend { all: true } => emit_all(&policy_sweep(&cfg)?, cli)?,
        Command::Ablate => emit_all(&ablation_suite(&cfg)?, cli)?,
        Command::Replay { log, claim } => {
            let default_claim = cfg.attack.as_ref().map_or("m*".to_string(), |a| a.claim_id.clone());
            let tracked = ClaimId::new(claim.clone().unwrap_or(default_claim));
            let prep = cascade_harness::experiment::prepare(&cfg)?;
            let registry = prep.run.registry()?;
            let records = read_trace_log(log)?;
            let rep = replay_offline(records, &registry, &tracked, cfg.topology.n, cfg.horizon)?;
            println!(
                "messages={} lineage nodes={} edges={} roots={:?} warnings={}",
                rep.messages,
                rep.lineage.len(),
                rep.lineage.edges().len(),
                rep.roots,
                rep.warnings
            );
            let doc = LineageDoc {
                graph: LineageDelta {
                    nodes: rep.lineage.records(),
                    edges: rep.lineage.edges().to_vec(),
                },
                coverage: rep.coverage,
                roots: rep.roots,
                warnings: rep.warnings,
                messages: rep.messages,
            };
            let path = cli.out.join(format!("{stem}_replay.json"));
            let text = serde_json::to_string_pretty(&doc).map_err(|source| HarnessError::Json {
                path: path.clone(),
                source,
            })?;
            std::fs::write(&path, text + "\n").map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
