//! End-to-end runs of the `symmetra` binary.

use std::path::Path;
use std::process::{Command, Output};

use symmetra::nalgebra::DMatrix;
use symmetra::sdp_model::{to_sdpa, write_sdpa};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symmetra")).args(args).env_remove("SYMMETRA_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in\n{out}"));
    line[key.len()..].trim().parse().unwrap()
}

/// Lovász theta of the 5-cycle: `max ⟨J, Y⟩` with `tr Y = 1`, `Y_ij = 0` on edges.
fn pentagon(dir: &Path) -> std::path::PathBuf {
    let n = 5;
    let mut cons = vec![(DMatrix::identity(n, n), 1.0)];
    for i in 0..n {
        let j = (i + 1) % n;
        let mut e = DMatrix::zeros(n, n);
        e[(i, j)] = 0.5;
        e[(j, i)] = 0.5;
        cons.push((e, 0.0));
    }
    let p = to_sdpa(&DMatrix::from_element(n, n, 1.0), &cons);
    let path = dir.join("pentagon.dat-s");
    write_sdpa(&p, &path).unwrap();
    std::fs::write(dir.join("c5.json"), r#"{"n": 5, "generators": [[1,2,3,4,0],[4,3,2,1,0]]}"#).unwrap();
    path
}

#[test]
fn delsarte_rational_prints_two() {
    let o = run(&["delsarte", "-n", "3", "-d", "3", "-q", "2", "--rational"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "bound: 2"), "{}", stdout(&o));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = run(&["delsarte", "-n", "3", "-d", "3", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn long_crossing_needs_flag() {
    let o = run(&["crossing", "-m", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn computational_failure_exits_one_with_error_name() {
    let o = run(&["delsarte", "-n", "3", "-d", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("HammingError::Range"));
}

#[test]
fn reduce_round_trip_keeps_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let input = pentagon(dir.path());
    let group = dir.path().join("c5.json");
    let full = run(&["solve", input.to_str().unwrap(), "--tol", "1e-9"]);
    assert!(full.status.success(), "{}", String::from_utf8_lossy(&full.stderr));
    let want = field(&stdout(&full), "objective");
    assert!((want - 5f64.sqrt()).abs() < 1e-6);
    for step in ["1", "1.5", "2"] {
        let out = dir.path().join(format!("out{step}.dat-s"));
        let o = run(&["reduce", "--sdpa", input.to_str().unwrap(), "--group", group.to_str().unwrap(), "--step", step, "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let side = format!("{}.json", out.display());
        let s = run(&["solve", out.to_str().unwrap(), "--tol", "1e-9", "--recover", &side]);
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
        let got = field(&stdout(&s), "original objective");
        assert!((got - want).abs() < 1e-6, "step {step}: {got} vs {want}");
    }
}

#[test]
fn output_and_manifest_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let input = pentagon(dir.path());
    let group = dir.path().join("c5.json");
    let out = dir.path().join("r.dat-s");
    let args = ["reduce", "--sdpa", input.to_str().unwrap(), "--group", group.to_str().unwrap(), "--step", "2", "-o", out.to_str().unwrap()];
    let a = run(&args);
    let first = std::fs::read(&out).unwrap();
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, std::fs::read(&out).unwrap());
    let m = dir.path().join("m.json");
    let o = run(&["crossing", "-m", "5", "-n", "7", "--json", m.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    assert_eq!(v["command"], "crossing");
    assert_eq!(v["seed"], 1);
    assert!(v["results"]["alpha"].as_f64().unwrap() > 0.0);
    assert!(v["timings"]["alpha"].is_number());
}

#[test]
fn blockdiag_reports_verification() {
    let dir = tempfile::tempdir().unwrap();
    // Bose–Mesner algebra of the 4-cycle: I, adjacency, distance two.
    let basis = r#"{"n": 4, "elements": [
        [[0,0,1],[1,1,1],[2,2,1],[3,3,1]],
        [[0,1,1],[1,0,1],[1,2,1],[2,1,1],[2,3,1],[3,2,1],[3,0,1],[0,3,1]],
        [[0,2,1],[2,0,1],[1,3,1],[3,1,1]]], "labels": ["I", "A", "A2"]}"#;
    let path = dir.path().join("a.json");
    std::fs::write(&path, basis).unwrap();
    let o = run(&["blockdiag", "--basis", path.to_str().unwrap(), "--seed", "1", "--tol", "1e-9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("block sizes     1 1 1"), "{s}");
    assert!(s.contains("passed                 true"));
}

#[test]
fn sos_perfect_square_and_motzkin() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("swap.json");
    std::fs::write(&g, r#"{"n": 2, "generators": [[1, 0]]}"#).unwrap();
    let sq = dir.path().join("sq.json");
    std::fs::write(&sq, "[[[2,0],1],[[1,1],2],[[0,2],1]]").unwrap();
    let o = run(&["sos", "--poly", sq.to_str().unwrap(), "--group", g.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("exact rational certificate true"));
    let mz = dir.path().join("motzkin.json");
    std::fs::write(&mz, "[[[4,2],1],[[2,4],1],[[2,2],-3],[[0,0],1]]").unwrap();
    let o = run(&["sos", "--poly", mz.to_str().unwrap(), "--group", g.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("status: not a sum of squares") && s.contains("verified true"), "{s}");
}

#[test]
fn sphere_lp_in_degrees() {
    let o = run(&["sphere-lp", "-n", "8", "--theta", "60", "-d", "11", "--certify", "sos"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = field(&stdout(&o), "bound");
    assert!((240.0..240.01).contains(&b), "{b}");
    assert_eq!(run(&["sphere-lp", "-n", "8", "--theta", "200", "-d", "11"]).status.code(), Some(2));
}
