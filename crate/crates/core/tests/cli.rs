//! End-to-end runs of the `kbpm` binary.

use kbpm::data::{load_matrix, load_reports, read_csv};
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
n_grid = [20, 40]
test_count = 60
ensemble = 50
ycom_cap = 40
orthant_draws = 500

[dataset]
kind = "synthetic_gaussians"
d0 = 4
separation = 2.0

[kernel]
kind = "arccosine"
depth = 3
"#;

fn kbpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbpm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn bounds_and_compare_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().to_str().unwrap();
    for cmd in ["bounds", "compare"] {
        let o = kbpm(&["--config", &cfg, "--out-dir", out, "--seed", "5", cmd]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let rows = read_csv(&dir.path().join(format!("{cmd}.csv"))).unwrap();
        assert_eq!(rows.len(), 2);
        let reports = load_reports(&dir.path().join(format!("{cmd}.jsonl"))).unwrap();
        assert!(reports
            .iter()
            .all(|r| r.master_seed == 5 && r.error.is_none()));
    }
    let compare = load_reports(&dir.path().join("compare.jsonl")).unwrap();
    assert!(compare
        .iter()
        .all(|r| r.eval.is_some() && r.eval_com.is_some()));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().to_str().unwrap();
    let o = kbpm(&[
        "--config",
        &cfg,
        "--out-dir",
        out,
        "--n-grid",
        "10,15,25",
        "--delta",
        "0.05",
        "--depth",
        "2",
        "--ycom-cap",
        "5",
        "bounds",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let reports = load_reports(&dir.path().join("bounds.jsonl")).unwrap();
    assert_eq!(
        reports.iter().map(|r| r.n).collect::<Vec<_>>(),
        [10, 15, 25]
    );
    for r in &reports {
        assert_eq!(r.delta, 0.05);
        assert!(r.bounds.as_ref().unwrap().log_inv_py.is_none());
    }
}

#[test]
fn sample_and_data_export_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().to_str().unwrap();
    let o = kbpm(&[
        "--config",
        &cfg,
        "--out-dir",
        out,
        "--ensemble",
        "30",
        "sample",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let gp = load_matrix(&dir.path().join("samples_gp_n20.bpmmat")).unwrap();
    assert_eq!(gp.ncols(), 20);
    assert!(dir.path().join("samples_iso_n40.meta.json").exists());

    let o = kbpm(&["--config", &cfg, "--out-dir", out, "data"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("examples: 100"));
    let x = load_matrix(&dir.path().join("dataset_x.bpmmat")).unwrap();
    assert_eq!(x.shape(), (100, 4));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    assert_eq!(kbpm(&["verify"]).status.code(), Some(0));
    assert_eq!(
        kbpm(&["verify", "--corrupt-tolerance"]).status.code(),
        Some(1)
    );

    assert_eq!(kbpm(&["--bogus", "bounds"]).status.code(), Some(2));
    assert_eq!(
        kbpm(&["--delta", "1.5", "--out-dir", out, "bounds"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        kbpm(&["--config", "/nonexistent.toml", "bounds"])
            .status
            .code(),
        Some(2)
    );
    let bad = write_config(dir.path(), "n_grid = [10]\nunknown_key = 1\n");
    assert_eq!(kbpm(&["--config", &bad, "bounds"]).status.code(), Some(2));
    let missing = write_config(
        dir.path(),
        "[dataset]\nkind = \"mnist\"\nimages = \"/no/such\"\nlabels = \"/no/such\"\n",
    );
    let o = kbpm(&["--config", &missing, "--out-dir", out, "bounds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}
