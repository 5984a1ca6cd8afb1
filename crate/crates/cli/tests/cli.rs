use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn patrol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patrol")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad report ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn grid_mh_hit_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("grid.json");
    let chain = dir.path().join("mh.csv");
    let out = patrol(&["graph", "grid", "--rows", "3", "--cols", "3", "--out", s(&graph)]);
    assert!(out.status.success());
    let r = report(&out);
    assert_eq!(r["result"]["n"], 9);
    assert_eq!(r["config"]["command"]["graph"]["grid"]["rows"], 3);
    assert!(r["versions"]["prng"].as_str().unwrap().contains("ChaCha8"));
    assert!(r["wall_ms"].is_u64());

    assert!(patrol(&["chain", "mh", "--graph", s(&graph), "--out", s(&chain)]).status.success());
    let v = patrol(&["chain", "validate", "--chain", s(&chain), "--graph", s(&graph)]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(report(&v)["result"]["reversible"], true);

    let h = report(&patrol(&["hit", "--chain", s(&chain)]));
    let m = h["result"]["expected_returns"].as_array().unwrap();
    assert!(m.iter().all(|x| (x.as_f64().unwrap() - 9.0).abs() < 1e-9));
}

#[test]
fn invalid_chain_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.json");
    let chain = dir.path().join("bad.csv");
    patrol(&["graph", "grid", "--rows", "1", "--cols", "2", "--out", s(&graph)]);
    // identity: reducible
    std::fs::write(&chain, "1,0\n0,1\n").unwrap();
    let v = patrol(&["chain", "validate", "--chain", s(&chain), "--graph", s(&graph)]);
    assert_eq!(v.status.code(), Some(1));
    assert_eq!(report(&v)["result"]["irreducible"], false);

    let missing = patrol(&["hit", "--chain", s(&dir.path().join("nope.csv"))]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(report(&missing)["status"], "error");
}

#[test]
fn unknown_flags_and_figures_rejected() {
    assert_eq!(patrol(&["graph", "sf", "--bogus"]).status.code(), Some(2));
    assert!(!patrol(&["reproduce", "fig5"]).status.success());
}

#[test]
fn reproduce_fig3_passes_and_writes_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = dir.path().join("fig3.csv");
    let rep = dir.path().join("report.json");
    let out = patrol(&["--report", s(&rep), "reproduce", "fig3", "--strategy-out", s(&strategy)]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(r["result"]["pass"], true);
    assert!((r["result"]["achieved_value"].as_f64().unwrap() - 12.43).abs() <= 0.02);
    assert_eq!(std::fs::read_to_string(&strategy).unwrap().lines().count(), 9);
}

#[test]
fn reproduce_fig7_passes() {
    let r = report(&patrol(&["reproduce", "fig7"]));
    assert_eq!(r["result"]["pass"], true);
    assert_eq!(r["result"]["details"]["validation"]["reversible"], true);
}

#[test]
fn missed_target_exits_two() {
    let out = patrol(&["reproduce", "fig4a", "--restarts", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["result"]["pass"], false);
    assert!(r["result"]["achieved_value"].as_f64().unwrap() > 16.5);
}

#[test]
fn opt_writes_a_valid_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.json");
    let out_chain = dir.path().join("p.csv");
    patrol(&["graph", "grid", "--rows", "2", "--cols", "2", "--out", s(&graph)]);
    let r = report(&patrol(&["opt", "kemeny", "--graph", s(&graph), "--restarts", "4", "--seed", "3", "--out", s(&out_chain)]));
    assert_eq!(r["status"], "ok");
    assert_eq!(r["result"]["validation"]["stationary_ok"], true);
    let again = report(&patrol(&["opt", "kemeny", "--graph", s(&graph), "--restarts", "4", "--seed", "3"]));
    assert_eq!(r["result"]["objective"], again["result"]["objective"]);

    let meet = patrol(&["opt", "meeting", "--graph", s(&graph), "--restarts", "1"]);
    assert_eq!(meet.status.code(), Some(1));
}

#[test]
fn entropy_rtent_sim_export() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("sf.json");
    let chain = dir.path().join("p.csv");
    let hist = dir.path().join("h.csv");
    let traj = dir.path().join("t.csv");
    let pix = dir.path().join("pix.csv");
    patrol(&["graph", "sf", "--out", s(&graph)]);
    patrol(&["chain", "mh", "--graph", s(&graph), "--out", s(&chain)]);

    let rt = report(&patrol(&["rtent", "--chain", s(&chain), "--graph", s(&graph), "--hist", s(&hist)]));
    assert_eq!(rt["result"]["horizon"], 2292);
    assert!(rt["result"]["entropy"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(&hist).unwrap().starts_with("k,node0"));

    let run = patrol(&["sim", "run", "--chain", s(&chain), "--graph", s(&graph), "--start", "0", "--steps", "100", "--seed", "4", "--out", s(&traj)]);
    assert!(run.status.success());
    let first = std::fs::read_to_string(&traj).unwrap();
    patrol(&["sim", "run", "--chain", s(&chain), "--graph", s(&graph), "--start", "0", "--steps", "100", "--seed", "4", "--out", s(&traj)]);
    assert_eq!(first, std::fs::read_to_string(&traj).unwrap());
    assert_eq!(first.lines().count(), 102);

    let ret = report(&patrol(&["sim", "returns", "--chain", s(&chain), "--graph", s(&graph), "--node", "0", "--samples", "2000"]));
    assert_eq!(ret["result"]["samples"], 2000);

    assert!(patrol(&["export", "pixels", "--chain", s(&chain), "--out", s(&pix)]).status.success());
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&pix)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn identity_pixels_are_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("i.csv");
    let pix = dir.path().join("pix.csv");
    std::fs::write(&chain, "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    assert!(patrol(&["export", "pixels", "--chain", s(&chain), "--out", s(&pix)]).status.success());
    let text = std::fs::read_to_string(&pix).unwrap();
    assert_eq!(text, "1.000000,0.000000,0.000000\n0.000000,1.000000,0.000000\n0.000000,0.000000,1.000000\n");
}

#[test]
fn entropy_max_on_grid() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.json");
    patrol(&["graph", "grid", "--rows", "3", "--cols", "3", "--out", s(&graph)]);
    let r = report(&patrol(&["entropy", "max", "--graph", s(&graph)]));
    assert!((r["result"]["value"].as_f64().unwrap() - 1.27).abs() < 0.005);
}

#[test]
fn workers_env_is_honoured() {
    let out = Command::new(env!("CARGO_BIN_EXE_patrol"))
        .env("PATROL_WORKERS", "1")
        .args(["graph", "sf", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(report(&out)["workers"], 1);
}
