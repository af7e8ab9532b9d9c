use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dvft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvft"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn simulate(config: &Path, out: &Path) -> Output {
    dvft(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ])
}

fn report(out: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(out.join("conservation.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn check_complex_exit_codes() {
    let ok = dvft(&["check-complex", "cfk", "3", "--window", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("0 violations"));
    let ok = dvft(&["check-complex", "cubic", "2", "--window", "3"]);
    assert_eq!(ok.status.code(), Some(0));
    let usage = dvft(&["check-complex", "cfk", "5"]);
    assert_eq!(usage.status.code(), Some(2));
    let usage = dvft(&["check-complex", "simplex", "2"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn rest_config_stays_at_rest() {
    let out = tempfile::tempdir().unwrap();
    let run = simulate(&configs_dir().join("rest.toml"), out.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "i,j,s,t,rx,ry,rz,R00,R01,R02,R10,R11,R12,R20,R21,R22");
    let expected = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut count = 0;
    for line in lines {
        let vals: Vec<f64> = line.split(',').skip(4).map(|x| x.parse().unwrap()).collect();
        for (a, b) in vals.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{line}");
        }
        count += 1;
    }
    // 16 vertices per diagonal, 4 initial diagonals plus 10 computed ones
    assert_eq!(count, 16 * 14);
    let rows = report(out.path());
    assert_eq!(rows.len(), 10);
    for row in rows {
        assert!(row["max_el_residual"].as_f64().unwrap() <= 1e-10);
    }
}

#[test]
fn free_rod_conserves_all_currents() {
    let out = tempfile::tempdir().unwrap();
    let run = simulate(&configs_dir().join("perturbed.toml"), out.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    for row in report(out.path()) {
        assert!(row["symmetric"].as_array().unwrap().iter().all(|b| b.as_bool() == Some(true)));
        for c in row["currents"].as_array().unwrap() {
            assert!(c.as_f64().unwrap().abs() <= 1e-8, "{row}");
        }
        assert!(row["max_el_residual"].as_f64().unwrap() <= 1e-10);
    }
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("gravity.toml");
    assert_eq!(simulate(&cfg, a.path()).status.code(), Some(0));
    assert_eq!(simulate(&cfg, b.path()).status.code(), Some(0));
    for f in ["trajectory.csv", "conservation.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let rows = report(a.path());
    let flags: Vec<bool> = rows[0]["symmetric"].as_array().unwrap().iter().map(|b| b.as_bool().unwrap()).collect();
    assert_eq!(flags, [true, true, false, false, false, true]);
}

#[test]
fn invalid_configs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("rest.toml")).unwrap();
    let bad = text.replace("C1 = [[1.0, 0.0, 0.0]", "C1 = [[1.0, 0.2, 0.0]");
    assert_ne!(bad, text);
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, bad).unwrap();
    let run = simulate(&path, dir.path());
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("material.C1 not symmetric"));

    std::fs::write(&path, "steps = \"ten\"\n").unwrap();
    assert_eq!(simulate(&path, dir.path()).status.code(), Some(2));
    assert_eq!(simulate(&dir.path().join("missing.toml"), dir.path()).status.code(), Some(2));
}

#[test]
fn trajectory_round_trips_as_initial_table() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert_eq!(simulate(&configs_dir().join("perturbed.toml"), &first).status.code(), Some(0));
    let text = std::fs::read_to_string(configs_dir().join("perturbed.toml")).unwrap();
    let table = text
        .replace("steps = 50", "steps = 3")
        .replace(
            "kind = \"perturbed\"\namplitude = 0.01\nseed = 42",
            &format!("kind = \"table\"\npath = \"{}\"", first.join("trajectory.csv").display()),
        );
    let path = dir.path().join("table.toml");
    std::fs::write(&path, table).unwrap();
    let run = simulate(&path, &dir.path().join("second"));
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
}
