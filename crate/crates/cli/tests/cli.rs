use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn amlmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amlmc")).args(args).env_remove("AMLMC_OUT").output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.in.json");
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_owned()
}

/// Data lines of a CSV table written by the CLI, split into fields.
fn table(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().to_owned();
    (header, lines.map(|l| l.split(',').map(str::to_owned).collect()).collect())
}

const SMALL_RUN: &str = r#"{ "reference_mesh": 3, "estimator": { "warmup": 10, "sample_log": 5 } }"#;

fn small_run(out: &Path, seed: &str) -> Output {
    let cfg = write_config(out.parent().unwrap(), SMALL_RUN);
    amlmc(&["run", "--example", "1", "--sigma2", "1", "--tol", "0.25", "--seed", seed, "--out", out.to_str().unwrap(), "--config", &cfg])
}

#[test]
fn equal_configs_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = small_run(out, "4");
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["levels_0.csv", "samples_0.csv", "scatter.csv", "work_vs_tol.csv", "hierarchy/manifest.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    // A second run in the same directory reuses the saved hierarchy.
    let before = fs::read(a.join("hierarchy/manifest.json")).unwrap();
    assert!(small_run(&a, "4").status.success());
    assert_eq!(before, fs::read(a.join("hierarchy/manifest.json")).unwrap());
    assert_eq!(fs::read(a.join("work_vs_tol.csv")).unwrap(), fs::read(b.join("work_vs_tol.csv")).unwrap());
}

#[test]
fn seed_changes_values_not_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(small_run(&a, "1").status.success());
    assert!(small_run(&b, "2").status.success());
    let (ha, ra) = table(&a.join("work_vs_tol.csv"));
    let (hb, rb) = table(&b.join("work_vs_tol.csv"));
    assert_eq!(ha, hb);
    assert_eq!(ra.len(), rb.len());
    assert_ne!(ra, rb);
    let first = fs::read_to_string(a.join("work_vs_tol.csv")).unwrap();
    assert!(first.starts_with("# config "));
}

#[test]
fn empty_tolerance_list_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "tols": [] }"#);
    let o = amlmc(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "tolerance": 0.1 }"#);
    let o = amlmc(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(amlmc(&["run", "--tol"]).status.code(), Some(2));
    assert_eq!(amlmc(&["run", "--example", "3"]).status.code(), Some(2));
    assert_eq!(amlmc(&["run", "--scheme", "mc"]).status.code(), Some(2));
}

#[test]
fn convergence_table_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("conv");
    let cfg = write_config(tmp.path(), r#"{ "convergence": { "adaptive_meshes": 4, "uniform_meshes": 3 } }"#);
    let o = amlmc(&["convergence", "--example", "0", "--out", out.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = table(&out.join("convergence.csv"));
    let col = |name: &str| header.split(',').position(|h| h == name).unwrap();
    let (ladder, dofs, e, e_abs) = (col("ladder"), col("dofs"), col("e_est"), col("e_est_abs"));
    for name in ["adaptive", "uniform"] {
        let d: Vec<usize> = rows.iter().filter(|r| r[ladder] == name).map(|r| r[dofs].parse().unwrap()).collect();
        assert!(d.len() >= 3, "{name}");
        assert!(d.windows(2).all(|w| w[0] < w[1]), "{name}: {d:?}");
    }
    for r in &rows {
        let (e, a): (f64, f64) = (r[e].parse().unwrap(), r[e_abs].parse().unwrap());
        assert!(a >= e.abs() * (1.0 - 1e-12), "{r:?}");
    }
}

#[test]
fn hierarchy_command_saves_requested_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("h");
    let cfg = write_config(tmp.path(), r#"{ "hierarchy_depth": 3 }"#);
    let o = amlmc(&["hierarchy", "--example", "2", "--out", out.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["base.mesh", "mesh_00.mesh", "mesh_02.mesh", "manifest.json"] {
        assert!(out.join("hierarchy").join(f).exists(), "{f}");
    }
    assert!(!out.join("hierarchy/mesh_03.mesh").exists());
    let manifest = fs::read_to_string(out.join("hierarchy/manifest.json")).unwrap();
    assert!(manifest.contains("\"basis\""));
    assert!(out.join("config.json").exists());
}
