use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[grid]
h = 0.05

[boundary]
doors = [[[1.0, 0.4], [1.0, 0.6]]]

[initial]
regions = [[0.0, 0.5, 0.0, 0.5]]

[run]
T = 0.2
tau = 0.02
snapshot_every = 5
"#;

fn crowdflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdflow")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_snapshots_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = crowdflow(&["run", path(&sc), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut want = vec!["metrics.csv".to_string()];
    for step in [0, 5, 10] {
        want.push(format!("density_{step:06}.csv"));
        want.push(format!("density_{step:06}.pgm"));
    }
    want.sort();
    assert_eq!(names, want);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "step,time,total_mass,door_outflux_cum,max_density,pd_iterations,gap");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,0,0.25"), "{}", lines[1]);

    // byte-identical on a second run
    let again = dir.path().join("again");
    assert!(crowdflow(&["run", path(&sc), "--out", path(&again)]).status.success());
    for n in &names {
        assert_eq!(fs::read(out.join(n)).unwrap(), fs::read(again.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn correct_brings_density_into_the_box() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let mut rows = vec![vec!["0.5"; 20]; 20];
    rows[10][10] = "2.0";
    let csv: String = rows.iter().map(|r| r.join(",") + "\n").collect();
    let density = dir.path().join("rho.csv");
    fs::write(&density, csv).unwrap();
    let out = dir.path().join("c");
    let o = crowdflow(&["correct", path(&sc), "--density", path(&density), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("corrected.csv")).unwrap();
    let values: Vec<f64> = text.lines().flat_map(|l| l.split(',')).map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 400);
    assert!(values.iter().all(|v| (-1e-6..=1.0 + 1e-6).contains(v)));
    assert!(out.join("pressure.csv").exists());
}

#[test]
fn compare_identical_scenarios_has_zero_differences() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let out = dir.path().join("cmp");
    let o = crowdflow(&["compare", path(&sc), path(&sc), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,time,mass_a,mass_b,door_density_a,door_density_b,linf_diff,l2_diff");
    let mut rows = 0;
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(&cols[6..], &["0", "0"]);
        rows += 1;
    }
    assert_eq!(rows, 11);
}

#[test]
fn eikonal_writes_potential() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("small.toml");
    fs::write(&sc, SMALL).unwrap();
    let out = dir.path().join("e");
    let o = crowdflow(&["eikonal", path(&sc), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["potential.csv", "velocity_x.csv", "velocity_y.csv"] {
        assert_eq!(fs::read_to_string(out.join(f)).unwrap().lines().count(), 20);
    }
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("bad.toml");
    fs::write(&sc, "[grid]\nh = 0.05\n\n[boundary]\nobstacles = [[0.2, 1.5, 0.0, 0.5]]\n").unwrap();
    let o = crowdflow(&["run", path(&sc)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:5"), "{err}");

    let o = crowdflow(&["run", path(&dir.path().join("missing.toml"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));

    // usage errors show the synopsis
    let o = crowdflow(&["correct", path(&sc)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}
