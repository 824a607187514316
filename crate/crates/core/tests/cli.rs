use std::path::Path;
use std::process::{Command, Output};

use spectral_saturation::cli::{SaturateRow, ToterrRow};

fn specsat(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_specsat"));
    cmd.args(args).env_remove("SPECSAT_OUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("SPECSAT_OUT_DIR", d);
    }
    cmd.output().expect("binary runs")
}

const CONFIG: &str = r#"{
  "family": {"name": "tikhonov"},
  "spectrum": {"kind": "power", "n": 120, "s": 2.0},
  "source": {"mu": [0.5, 1.0, 2.0]},
  "delta_grid": {"start": 1e-2, "stop": 1e-6, "points": 9},
  "seed": 3
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.json");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn families_lists_five_builtins() {
    let out = specsat(&["families"], None);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["tikhonov", "example2", "example3", "example4", "tsvd"]);
}

#[test]
fn saturate_writes_parseable_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = specsat(&["saturate", "--config", &cfg], Some(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("saturate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SaturateRow::HEADER));
    let rows: Vec<SaturateRow> = lines.map(|l| SaturateRow::from_csv(l).unwrap()).collect();
    assert_eq!(rows.len(), 27);
    for r in &rows {
        assert_eq!(SaturateRow::from_csv(&r.to_csv()).unwrap(), *r);
        assert!(r.etot > 0.0);
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("saturate_report.json")).unwrap()).unwrap();
    assert_eq!(report["family"], "tikhonov");
    assert_eq!(report["entries"].as_array().unwrap().len(), 3);
}

#[test]
fn saturate_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = write_config(d.path(), CONFIG);
        assert!(specsat(&["saturate", "--config", &cfg], Some(d.path())).status.success());
    }
    for f in ["saturate.csv", "saturate_report.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn out_dir_flag_beats_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(env_dir.path(), CONFIG);
    let flag = flag_dir.path().display().to_string();
    let out = specsat(&["saturate", "--config", &cfg, "--out-dir", &flag], Some(env_dir.path()));
    assert!(out.status.success());
    assert!(flag_dir.path().join("saturate.csv").exists());
    assert!(!env_dir.path().join("saturate.csv").exists());
}

#[test]
fn malformed_config_exits_2_with_line_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace("\"seed\": 3", "\"seed\": 3,\n  \"colour\": \"red\"");
    let cfg = write_config(dir.path(), &bad);
    let out = specsat(&["saturate", "--config", &cfg], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{cfg}:7:")), "{err}");
    assert!(!dir.path().join("saturate.csv").exists());
}

#[test]
fn invalid_source_is_rejected_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CONFIG.replace("[0.5, 1.0, 2.0]", "[0.25, 0.5]"));
    let out = specsat(&["saturate", "--config", &cfg], Some(dir.path()));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn toterr_rows_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = specsat(
        &[
            "toterr", "--family", "example2", "--param", "k=2", "--spectrum", r#"{"kind":"power","n":80,"s":2.0}"#,
            "--mu", "1.5", "--delta", "1e-2,1e-3,1e-4", "--out", "t.csv",
        ],
        Some(dir.path()),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(ToterrRow::HEADER));
    let rows: Vec<ToterrRow> = lines.map(|l| ToterrRow::from_csv(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].delta, 1e-2);
    assert!(rows.windows(2).all(|w| w[1].value <= w[0].value));
}

#[test]
fn check_and_qualification_emit_json() {
    let out = specsat(&["check", "--family", "tikhonov"], None);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["family"], "tikhonov");
    let out = specsat(&["qualification", "--family", "tsvd"], None);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sentinel_infinite"], true);
    assert!(v["mu_lo"].as_f64().unwrap() <= v["mu_hi"].as_f64().unwrap());
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(specsat(&["toterr", "--family", "tikhonov"], None).status.code(), Some(2));
    assert_eq!(
        specsat(&["toterr", "--family", "tikhonov", "--delta", "-1", "--mu", "1"], None).status.code(),
        Some(2)
    );
    assert_eq!(specsat(&["check", "--family", "example2", "--param", "k=0.5"], None).status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = spectral_saturation::config::ExperimentConfig::load(&path).unwrap();
        cfg.build().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
}
