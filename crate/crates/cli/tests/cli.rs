use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rsrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsrp"))
        .args(args)
        .env_remove("RSRP_K")
        .env_remove("RSRP_OUT")
        .env_remove("RSRP_TIME_LIMIT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> String {
    let file = path(dir, name);
    let mut args = vec!["gen", "--out", &file];
    args.extend_from_slice(extra);
    let out = rsrp(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    file
}

#[test]
fn gen_is_deterministic() {
    let a = rsrp(&["gen", "--seed", "4", "--family", "weibull"]);
    let b = rsrp(&["gen", "--seed", "4", "--family", "weibull"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = rsrp(&["gen", "--seed", "5", "--family", "weibull"]);
    assert_ne!(a.stdout, c.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["health_model"]["family"], "weibull");
}

#[test]
fn solve_writes_plan_and_report() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--seed", "1"]);
    let out_dir = path(&dir, "out");
    let out = rsrp(&["solve", &inst, "--out", &out_dir, "--max-iter", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("status "));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("level 0 "));

    let report = read_json(dir.path().join("out/report.json"));
    let (lb, ub) = (report["lb"].as_f64().unwrap(), report["ub"].as_f64().unwrap());
    assert!(lb <= ub + 1e-9);
    let solution = dir.path().join("out/solution.json");
    let plan = read_json(&solution);
    assert_eq!(plan["objective"].as_f64().unwrap(), ub);

    let sol = solution.to_str().unwrap();
    let out = rsrp(&["validate", &inst, "--solution", sol]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("solution ok"));
}

#[test]
fn solve_reports_infeasibility() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--seed", "2", "--vehicles", "1", "--trips", "3"]);
    let mut v = read_json(&inst);
    // Two copies of the first trip cannot both be served by one vehicle.
    let mut copy = v["trips"][0].clone();
    copy["id"] = "dup".into();
    v["trips"].as_array_mut().unwrap().push(copy);
    fs::write(&inst, v.to_string()).unwrap();
    let out = rsrp(&["solve", &inst, "--out", &path(&dir, "out")]);
    assert_eq!(code(&out), 2);
    let out = rsrp(&["lowerbound", &inst, "--out", &path(&dir, "out")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn time_limit_without_a_plan() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "big.json", &["--trips", "60", "--vehicles", "6", "--locations", "5"]);
    let out = rsrp(&["solve", &inst, "--out", &path(&dir, "out"), "--time-limit", "0.001"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(dir.path().join("out/report.json"));
    assert_eq!(report["status"], "time_limit");
    assert!(!dir.path().join("out/solution.json").exists());
}

#[test]
fn lowerbound_prints_one_line_per_level() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--seed", "3"]);
    let out = rsrp(&["lowerbound", &inst, "--out", &path(&dir, "lb"), "--max-iter", "3", "--json"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let levels = stdout.lines().filter(|l| l.starts_with("level ")).count();
    assert!((1..=3).contains(&levels));
    let report = read_json(dir.path().join("lb/report.json"));
    assert_eq!(report["mode"], "lp_lb");
    assert!(report["best_plan"].is_null());
}

#[test]
fn graph_writes_dot_stats_and_lp() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--seed", "6"]);
    let out_dir = path(&dir, "g");
    let out = rsrp(&["graph", &inst, "--level", "1", "--lp", "--out", &out_dir]);
    assert_eq!(code(&out), 0);
    let dot = fs::read_to_string(dir.path().join("g/graph.dot")).unwrap();
    assert!(dot.starts_with("digraph seeg {"));
    let stats = read_json(dir.path().join("g/graph_stats.json"));
    assert_eq!(stats["states"], 9);
    let lp = fs::read_to_string(dir.path().join("g/model.lp")).unwrap();
    assert!(lp.contains("Minimize") && lp.ends_with("End\n"));

    let out = rsrp(&["graph", &inst, "--ceeg", "--out", &path(&dir, "c")]);
    assert_eq!(code(&out), 0);
    assert!(!dir.path().join("c/model.lp").exists());
}

#[test]
fn validate_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &[]);
    assert_eq!(code(&rsrp(&["validate", &inst])), 0);
    let mut v = read_json(&inst);
    v["vehicles"] = Value::Array(Vec::new());
    fs::write(&inst, v.to_string()).unwrap();
    // An empty fleet is a valid instance that cannot be solved.
    assert_eq!(code(&rsrp(&["validate", &inst])), 0);
    assert_eq!(code(&rsrp(&["solve", &inst, "--out", &path(&dir, "out")])), 2);
    v["trips"][0]["arr_time"] = v["trips"][0]["dep_time"].clone();
    fs::write(&inst, v.to_string()).unwrap();
    let out = rsrp(&["validate", &inst]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
    assert_eq!(code(&rsrp(&["validate", &path(&dir, "missing.json")])), 1);
}

#[test]
fn environment_overrides() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "inst.json", &["--seed", "8"]);
    let out = Command::new(env!("CARGO_BIN_EXE_rsrp"))
        .args(["graph", &inst, "--level", "1"])
        .env("RSRP_K", "3")
        .env("RSRP_OUT", path(&dir, "env"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let stats = read_json(dir.path().join("env/graph_stats.json"));
    assert_eq!(stats["states"], 16);
}
