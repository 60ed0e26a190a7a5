use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::LazyLock;

use flatcircle_core::map_core::{fmt_decimal, parse_decimal};
use serde_json::Value;

/// A golden map tuned once for the whole file.
static MAP: LazyLock<(tempfile::TempDir, PathBuf)> = LazyLock::new(|| {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("golden.json");
    let out = flatcircle(dir.path(), &["tune", "--target-cf", "1,...", "--depth", "16", "--out", "golden.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir, path)
});

fn flatcircle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatcircle")).current_dir(dir).args(args).output().unwrap()
}

fn map_path() -> &'static str {
    MAP.1.to_str().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn rotnum_reports_golden_quotients() {
    let out = flatcircle(Path::new("."), &["rotnum", map_path()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cf: Vec<u64> = serde_json::from_value(v["cf"].clone()).unwrap();
    assert!(cf.len() >= 16 && cf[..16].iter().all(|&a| a == 1));
    let rho = v["rho"].as_str().unwrap();
    assert!(rho.starts_with("0.6180339"));
}

#[test]
fn missing_file_is_a_config_error() {
    let out = flatcircle(Path::new("."), &["rotnum", "/nonexistent/map.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn deep_partition_exhausts_precision() {
    let out = flatcircle(Path::new("."), &["partition", map_path(), "--level", "99"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "precision-exhausted");
}

#[test]
fn usage_and_validation_errors_exit_2() {
    let out = flatcircle(Path::new("."), &["partition", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
    let out = flatcircle(Path::new("."), &["tune", "--target-cf", "1,0,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "validation");
    let out = flatcircle(Path::new("."), &["tune", "--target-cf", "1,1", "--u", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, format!(r#"{{"map": "{}", "level": 2}}"#, map_path())).unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = flatcircle(dir.path(), &["partition", "--config", cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let els: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(els.iter().all(|e| e["level"] == 2));
    let out = flatcircle(dir.path(), &["partition", "--config", cfg, "--level", "3"]);
    let els: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(els.iter().all(|e| e["level"] == 3));

    std::fs::write(dir.path().join("bad.json"), r#"{"levle": 3}"#).unwrap();
    let out = flatcircle(dir.path(), &["partition", map_path(), "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn partition_decimals_round_trip() {
    let out = flatcircle(Path::new("."), &["partition", map_path(), "--level", "5"]);
    let els: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(els[0]["kind"], "preimage");
    for e in &els {
        for key in ["left", "right", "err_radius"] {
            let s = e[key].as_str().unwrap();
            assert_eq!(fmt_decimal(&parse_decimal(s, 256).unwrap()), s);
        }
    }
}

#[test]
fn csv_outputs_have_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = flatcircle(d, &["geometry", map_path(), "--levels", "4..6", "--out", "g.csv"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(d.join("g.csv")).unwrap();
    assert!(text.starts_with("level,tau,min_preimage_gap_ratio,max_gap,adjacent_gap_min_ratio\n"));
    assert_eq!(text.lines().count(), 4);

    let out = flatcircle(d, &["transition", map_path(), "--levels", "4:6", "--out", "t.csv"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(text.starts_with("n,q_n,ratio,comparability_floor"));
}

#[test]
fn appendix_demo_on_identical_systems_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = flatcircle(
        dir.path(),
        &[
            "appendix-demo",
            "--f-gap",
            "1/3",
            "--g-gap",
            "1/3",
            "--depth",
            "8",
            "--grid",
            "64",
            "--samples",
            "130",
            "--out",
            "phi.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["monotone"], true);
    let text = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    for line in text.lines().skip(1) {
        let (x, y) = line.split_once(',').unwrap();
        let (x, y) = (parse_decimal(x, 128).unwrap(), parse_decimal(y, 128).unwrap());
        assert!((x - y).abs().to_f64() <= 1e-12);
    }
}
