use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
name = "smoke"
trials = 6
horizon = 6
master_seed = 5

[topology]
kind = "star"
n = 5

[dynamics]
beta = 0.3
delta = 0.3

[attack]
policy = "compliance"

[defense]
kind = "governed"
policy = "strict"
"#;

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade")).args(args).output().unwrap()
}

fn setup() -> (tempfile::TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("smoke.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");
    let (c, o) = (cfg.display().to_string(), out.display().to_string());
    (dir, c, o)
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_subcommand_runs() {
    let (_dir, cfg, out) = setup();
    for cmd in [
        &["topo"][..],
        &["simulate"],
        &["trials"],
        &["fit"],
        &["attack"],
        &["attack", "--sweep"],
        &["defend"],
        &["defend", "--all"],
        &["ablate"],
        &["report"],
    ] {
        let mut args = vec!["--config", &cfg, "--out", &out];
        args.extend_from_slice(cmd);
        ok(&cascade(&args));
    }
    let out = Path::new(&out);
    for f in ["smoke_graph.json", "smoke_meanfield.csv", "smoke_coverage.csv", "smoke_fits.csv", "smoke_runs.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn replay_reads_a_trace_log() {
    let (_dir, cfg, out) = setup();
    ok(&cascade(&["--config", &cfg, "--out", &out, "attack"]));
    let log = Path::new(&out).join("smoke_traces/run_0000.jsonl").display().to_string();
    let res = cascade(&["--config", &cfg, "--out", &out, "replay", "--log", &log]);
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stdout).contains("warnings=0"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&out).join("smoke_replay.json")).unwrap()).unwrap();
    assert_eq!(doc["coverage"].as_array().unwrap().len(), 6);
}

#[test]
fn jsonl_format_and_seed_override() {
    let (_dir, cfg, out) = setup();
    ok(&cascade(&["--config", &cfg, "--out", &out, "--format", "jsonl", "--seed", "9", "attack"]));
    assert!(Path::new(&out).join("smoke_runs.jsonl").is_file());
}

#[test]
fn exit_codes() {
    let (dir, cfg, out) = setup();
    assert_eq!(cascade(&["--out", &out, "topo"]).status.code(), Some(1));
    assert_eq!(cascade(&["--config", &cfg, "nonsense"]).status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, CONFIG.replace("beta = 0.3", "beta = 1.5")).unwrap();
    assert_eq!(cascade(&["--config", &bad.display().to_string(), "topo"]).status.code(), Some(1));
    let missing = dir.path().join("none.toml").display().to_string();
    assert_eq!(cascade(&["--config", &missing, "topo"]).status.code(), Some(2));
    let log = dir.path().join("no_log.jsonl").display().to_string();
    assert_eq!(
        cascade(&["--config", &cfg, "--out", &out, "replay", "--log", &log]).status.code(),
        Some(2)
    );
}
