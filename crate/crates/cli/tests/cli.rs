use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pwit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwit")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwit(&["simulate", "--width", "100", "--seed", "4", "--out", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["box_forest.csv", "ipc_tree.csv", "ponds.csv"]);
    let tree = fs::read_to_string(dir.path().join("ipc_tree.csv")).unwrap();
    assert!(tree.starts_with("# config: "));
    assert!(tree.contains("\"width\":100"));
    // header plus one row per vertex 1..=100
    assert_eq!(tree.lines().count(), 2 + 100);
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&pwit(&["simulate", "--seed", "9", "--out", arg(d.path())])), 0);
    }
    for f in ["ipc_tree.csv", "box_forest.csv", "ponds.csv"] {
        let (x, y) = (fs::read_to_string(a.path().join(f)).unwrap(), fs::read_to_string(b.path().join(f)).unwrap());
        // the echoed config names the output directory
        assert_eq!(x.lines().skip(1).collect::<Vec<_>>(), y.lines().skip(1).collect::<Vec<_>>(), "{f}");
    }
}

#[test]
fn simulate_json_documents_parse() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pwit(&["simulate", "--format", "json", "--out", arg(dir.path())])), 0);
    for f in ["ipc_tree.json", "box_forest.json", "ponds.json"] {
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
        assert_eq!(v["config"]["command"], "simulate");
    }
}

#[test]
fn low_cap_is_a_kernel_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwit(&["simulate", "--cap", "0.05", "--out", arg(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--cap"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pwit(&["verify", "--estimands", "no-such-thing", "--out", arg(dir.path())])), 2);
    assert_eq!(code(&pwit(&["verify", "--q-variant", "sideways"])), 2);
    assert_eq!(code(&pwit(&["stabilize", "--target", "3..1"])), 2);
    assert_eq!(code(&pwit(&["frobnicate"])), 2);
}

#[test]
fn deterministic_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwit(&["verify", "--suite", "deterministic", "--replicas", "300", "--out", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("deterministic.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["report"]["windows"], 300);
    assert_eq!(v["config"]["args"]["width"], 50);
}

#[test]
fn verify_then_export_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let o = pwit(&["verify", "--estimands", "pn-rank-uniform", "--replicas", "3000", "--out", arg(dir.path())]);
    assert!(matches!(code(&o), 0 | 1), "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("pn-rank-uniform.json");
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["outcome"]["campaign"]["replicas"], 3000);

    let csv = dir.path().join("rank.csv");
    assert_eq!(code(&pwit(&["export-hist", "--input", arg(&report), "--out", arg(&csv)])), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin,count"));
    let total: u64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    let n = v["outcome"]["reports"][0]["n"].as_u64().unwrap();
    assert_eq!(total, n);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rank.reference.json")).unwrap()).unwrap();
    assert_eq!(sidecar["reports"][0]["estimand"], "pn-rank-uniform");
    assert!(sidecar["reports"][0]["reference"]["law"].is_string());

    let json = dir.path().join("rank.json");
    assert_eq!(code(&pwit(&["export-hist", "--input", arg(&report), "--out", arg(&json), "--format", "json"])), 0);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["reports"][0]["histogram"].as_array().unwrap().len(), 5);
}

#[test]
fn empty_campaign_exports_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.json");
    fs::write(&input, r#"{"outcome": {"reports": []}}"#).unwrap();
    let out = dir.path().join("empty.csv");
    assert_eq!(code(&pwit(&["export-hist", "--input", arg(&input), "--out", arg(&out)])), 0);
    assert_eq!(fs::read_to_string(out).unwrap(), "bin,count\n");
}

#[test]
fn boxes_and_stabilize_outputs() {
    let o = pwit(&["boxes", "--width", "40", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["box_forest"]["boxes"].as_array().unwrap().len(), 40);

    let dir = tempfile::tempdir().unwrap();
    let o = pwit(&["stabilize", "--target", "-3..4", "--replicas", "2", "--radius", "1", "--out", arg(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let audit = fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 2 * 8);
    for line in audit.lines() {
        let a: Value = serde_json::from_str(line).unwrap();
        assert!(a["certificate"].as_u64().unwrap() >= 2);
    }
    let census: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("census.json")).unwrap()).unwrap();
    let total: u64 = census["census"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(total, 2);
}
