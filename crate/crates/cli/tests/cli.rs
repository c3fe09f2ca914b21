//! The `dqpe` binary: outputs, exit codes and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use dqpe::chem::{fcidump_write, Geometry, MolecularSystem};
use serde_json::Value;

fn dqpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqpe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn on_grid_phase_is_estimated_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let v = stdout_json(&dqpe(&[
        "estimate",
        "--phases",
        "0.25",
        "-t",
        "8",
        "-o",
        out.to_str().unwrap(),
    ]));
    assert_eq!(v["summary"]["mu"], 0.25);
    assert_eq!(v["summary"]["phase_error"], 0.0);
    for f in ["config.json", "run.json", "distribution.csv", "estimate.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = read_json(&out.join("run.json"));
    assert_eq!(manifest["seed"], 0);
    assert!(manifest["rng"].as_str().unwrap().contains("ChaCha20"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = dqpe(&["estimate", "-t", "0", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["kind"], "config");
    let o = dqpe(&["grad", "--phases", "0.1", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = dqpe(&["estimate", "--xyz", "/no/such/file.xyz", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    // Two antipodal on-grid peaks of equal weight have no mean direction.
    let o = dqpe(&[
        "estimate",
        "--phases",
        "0,0.5",
        "--estimator",
        "expectation",
        "-t",
        "4",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn sampled_runs_reproduce_from_their_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    stdout_json(&dqpe(&[
        "estimate",
        "--builtin",
        "h2",
        "--shots",
        "500",
        "--seed",
        "9",
        "-o",
        a.to_str().unwrap(),
    ]));
    assert!(a.join("counts.csv").exists() && a.join("counts.json").exists());
    stdout_json(&dqpe(&[
        "estimate",
        "--config",
        a.join("config.json").to_str().unwrap(),
        "-o",
        b.to_str().unwrap(),
    ]));
    for f in ["counts.csv", "estimate.json", "distribution.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn fcidump_and_xyz_sources_agree() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new(&["H", "H"], &[[0.0; 3], [0.74, 0.0, 0.0]], 0, 1).unwrap();
    let fcidump = dir.path().join("h2.fcidump");
    let es = MolecularSystem::new(g.clone()).unwrap().at_geometry(g.clone()).unwrap();
    fcidump_write(&es.hamiltonian, std::fs::File::create(&fcidump).unwrap()).unwrap();
    let xyz = dir.path().join("h2.xyz");
    std::fs::write(&xyz, g.to_xyz("h2")).unwrap();
    let run = |flag: &str, path: &Path, name: &str| {
        let out = dir.path().join(name);
        stdout_json(&dqpe(&[
            "estimate",
            flag,
            path.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ]))
    };
    let a = run("--fcidump", &fcidump, "f");
    let b = run("--xyz", &xyz, "x");
    let ea = a["summary"]["exact_energy"].as_f64().unwrap();
    let eb = b["summary"]["exact_energy"].as_f64().unwrap();
    assert!((ea - eb).abs() < 1e-10, "{ea} vs {eb}");
    assert!((ea - -1.137_283_834_488).abs() < 1e-8);
}

#[test]
fn grad_and_optimize_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let v = stdout_json(&dqpe(&["grad", "--builtin", "h2", "-o", g.to_str().unwrap()]));
    let report = read_json(&g.join("grad.json"));
    assert_eq!(report["smooth"]["validation"].as_array().unwrap().len(), 2);
    assert!(v["summary"]["bias_bound"].as_f64().unwrap() >= 0.0);
    let o = dir.path().join("o");
    let v = stdout_json(&dqpe(&[
        "optimize",
        "--builtin",
        "h3p-ground",
        "--max-iterations",
        "3",
        "-o",
        o.to_str().unwrap(),
    ]));
    assert_eq!(v["summary"]["iterations"], 2);
    let csv = std::fs::read_to_string(o.join("trace.csv")).unwrap();
    assert!(csv.starts_with("iteration,energy,gradient_norm,r_01,r_02,r_12\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(o.join("trace.json").exists() && o.join("trace.xyz").exists());
}

#[test]
fn stats_reports_the_query_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let v = stdout_json(&dqpe(&[
        "stats",
        "--epsilon",
        "1e-3",
        "--gates",
        "5",
        "-o",
        out.to_str().unwrap(),
    ]));
    let b = &v["summary"]["breakdown"];
    assert_eq!(b["gates"], 5);
    assert_eq!(b["total"].as_u64().unwrap(), 5 * 13 * b["shots"].as_u64().unwrap());
}

#[test]
fn reproduce_accuracy_writes_the_column_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    stdout_json(&dqpe(&["reproduce", "fig4-accuracy", "-o", out.to_str().unwrap()]));
    let csv = std::fs::read_to_string(out.join("fig4-accuracy.csv")).unwrap();
    assert!(csv.starts_with("t,window,phase,gce_error,mr_error\n"));
    assert_eq!(csv.lines().count(), 1 + 7 * 3 * 100);
}
