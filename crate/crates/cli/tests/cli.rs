use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn prefixopt(args: &[&str]) -> Output {
    prefixopt_env(args, &[])
}

fn prefixopt_env(args: &[&str], envs: &[(&str, String)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prefixopt"));
    cmd.args(args).env_remove("PREFIXOPT_EVALUATOR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn mock(extra: &str) -> String {
    format!("{} {extra}", env!("CARGO_BIN_EXE_mock-evaluator"))
}

#[test]
fn eval_prints_analytical_cost() {
    let dir = tempfile::tempdir().unwrap();
    let ripple = write(dir.path(), "r.json", r#"{"n":4,"nodes":[]}"#);
    let out = prefixopt(&["eval", "--graph", p(&ripple), "--mode", "analytical"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "area 3 delay 4");
    let sk = write(dir.path(), "s.json", r#"{"n":4,"nodes":[[3,2]]}"#);
    assert_eq!(stdout(&prefixopt(&["eval", "--graph", p(&sk)])).trim(), "area 4 delay 3");
}

#[test]
fn emitted_netlist_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.json", r#"{"n":8,"nodes":[[3,2],[5,4],[7,6],[7,4]]}"#);
    let v = dir.path().join("g.v");
    let out = prefixopt(&["emit-netlist", "--graph", p(&g), "--out", p(&v), "--polarity", "inverting"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&v).unwrap();
    assert!(text.contains("module"));
    let a = stdout(&prefixopt(&["eval", "--graph", p(&g)]));
    let b = stdout(&prefixopt(&["eval", "--graph", p(&v)]));
    assert_eq!(a, b);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code().unwrap();
    let bad_cfg = write(dir.path(), "bad.toml", "[train]\nbogus = 1\n");
    let out = dir.path().join("o");
    assert_eq!(code(prefixopt(&["train", "--config", p(&bad_cfg), "--out", p(&out)])), 3);
    assert_eq!(code(prefixopt(&["train", "--n", "4", "--steps", "0", "--out", p(&out)])), 3);
    assert_eq!(code(prefixopt(&["enumerate", "--n", "9", "--out", p(&out)])), 4);
    assert_eq!(code(prefixopt(&["baselines", "--n", "65", "--out", p(&out)])), 4);
    assert_eq!(code(prefixopt(&["train", "--n", "70", "--out", p(&out)])), 4);
    assert_eq!(code(prefixopt(&["anneal", "--n", "1", "--out", p(&out)])), 4);
    let illegal = write(dir.path(), "ill.json", r#"{"n":4,"nodes":[[3,1]]}"#);
    assert_eq!(code(prefixopt(&["eval", "--graph", p(&illegal)])), 6);
    assert_eq!(code(prefixopt(&["eval", "--graph", p(&dir.path().join("missing.json"))])), 7);
    assert_eq!(code(prefixopt(&["frobnicate"])), 2);
    assert_eq!(code(prefixopt(&["eval", "--graph", p(&illegal), "--mode", "external"])), 3);
}

#[test]
fn external_evaluator_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "g.json", r#"{"n":6,"nodes":[[5,4]]}"#);
    let args = ["eval", "--graph", p(&g), "--mode", "external", "--targets", "0.2,0.4"];
    let ok = prefixopt_env(&args, &[("PREFIXOPT_EVALUATOR", mock(""))]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    for behave in ["exit", "garbage", "partial"] {
        let out = prefixopt_env(&args, &[("PREFIXOPT_EVALUATOR", mock(&format!("--behave {behave}")))]);
        assert_eq!(out.status.code(), Some(5), "{behave}");
        assert!(!out.stderr.is_empty());
    }
    let cfg = write(dir.path(), "t.toml", "[eval]\ntimeout_secs = 0.5\n");
    let mut slow: Vec<&str> = args.to_vec();
    slow.extend(["--config", p(&cfg)]);
    let out = prefixopt_env(&slow, &[("PREFIXOPT_EVALUATOR", mock("--behave sleep --sleep-secs 5"))]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("timed out"));
}

#[test]
fn baselines_anneal_and_pareto_compare() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("arch");
    assert!(prefixopt(&["baselines", "--n", "6", "--out", p(&archive)]).status.success());
    let out = prefixopt(&["anneal", "--n", "6", "--steps", "3000", "--seed", "4", "--w", "0.9,0.1", "--out", p(&archive)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(archive.join("trajectory.jsonl").exists());
    let traj = std::fs::read_to_string(archive.join("trajectory.jsonl")).unwrap();
    assert_eq!(traj.lines().count(), 3000);

    let exact = dir.path().join("exact");
    let out = prefixopt(&["enumerate", "--n", "6", "--out", p(&exact)]);
    assert!(stdout(&out).starts_with("471 legal graphs, 5 front points"));

    let merged = dir.path().join("merged");
    let out = prefixopt(&["pareto", "--archive", p(&archive), "--compare", "--out", p(&merged)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("regular vs sa") || stdout(&out).contains("sa vs regular"));
    let cmp: Value = serde_json::from_slice(&std::fs::read(merged.join("compare.json")).unwrap()).unwrap();
    assert_eq!(cmp.as_array().unwrap().len(), 1);

    let both = dir.path().join("both");
    let out = prefixopt(&["pareto", "--archive", p(&exact), p(&archive), "--compare", "--out", p(&both)]);
    assert!(out.status.success());
    let cmp: Value = serde_json::from_slice(&std::fs::read(both.join("compare.json")).unwrap()).unwrap();
    let verdict = cmp[0]["comparison"]["verdict"].as_str().unwrap();
    assert!(verdict == "a_dominates" || verdict == "equivalent", "{verdict}");
    let csv = std::fs::read_to_string(both.join("front.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn train_writes_manifest_metrics_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[train]\nwarmup = 50\neval_interval = 100\ncheckpoint_interval = 200\n\n[model]\nkind = \"network\"\nblocks = 1\nchannels = 4\nprecision = \"f64\"\n",
    );
    let out_dir = dir.path().join("run");
    let out = prefixopt(&["train", "--config", p(&cfg), "--n", "4", "--steps", "400", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["job"]["command"], "train");
    assert_eq!(manifest["job"]["train"]["n"], 4);
    assert_eq!(manifest["job"]["train"]["warmup"], 50);
    assert!(manifest["finished_unix"].is_u64());
    let metrics = std::fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let bytes = std::fs::read(out_dir.join("model.bin")).unwrap();
    assert!(bytes.starts_with(b"PFXQNET\0"));
    assert!(out_dir.join("checkpoints").read_dir().unwrap().count() >= 2);
    assert!(out_dir.join("front.json").exists());
}
