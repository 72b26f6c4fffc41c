use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bdk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdk")).args(args).env("BDK_OUT_DIR", out).output().expect("spawn bdk")
}

fn manifest(out: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("manifest-{command}.json"))).expect("manifest written");
    serde_json::from_str(&text).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn verify_commands_pass_and_leave_manifests() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["verify-mixing", "verify-geometry"] {
        let o = bdk(dir.path(), &[cmd]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(dir.path(), cmd);
        assert_eq!(m["exit_code"], 0);
        assert_eq!(m["command"], cmd);
        assert!(!m["git_describe"].as_str().unwrap().is_empty());
    }
}

#[test]
fn out_flag_overrides_env() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = bdk(env_dir.path(), &["--out", flag_dir.path().to_str().unwrap(), "verify-mixing"]);
    assert_eq!(code(&o), 0);
    assert!(flag_dir.path().join("manifest-verify-mixing.json").exists());
    assert!(!env_dir.path().join("manifest-verify-mixing.json").exists());
}

#[test]
fn exit_codes_by_failure_family() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let missing = p.join("missing.bdkt");

    // Unknown flag and out-of-range t_m are validation failures.
    assert_eq!(code(&bdk(p, &["sample", "--zeta", "1"])), 3);
    assert_eq!(code(&bdk(p, &["invert", "--tm", "0"])), 3);
    assert_eq!(code(&bdk(p, &["invert", "--tm", "1000"])), 3);
    assert_eq!(manifest(p, "invert")["exit_code"], 3);

    // Missing checkpoint.
    assert_eq!(code(&bdk(p, &["invert", "--tm", "40", "--checkpoint", missing.to_str().unwrap()])), 5);
    assert_eq!(manifest(p, "invert")["exit_code"], 5);

    // Corrupt checkpoint is an I/O-family failure.
    let junk = p.join("junk.bdkt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(code(&bdk(p, &["invert", "--tm", "40", "--checkpoint", junk.to_str().unwrap()])), 2);
}

#[test]
fn scan_fit_edit_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let o = bdk(p, &["radius-scan", "--n", "32", "--stride", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(p.join("radius-scan.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["step", "r", "delta_r", "std_error"]);
    assert_eq!(rdr.records().count(), 11);

    let o = bdk(p, &["fit-boundary", "--attribute", "marker", "--tm", "40", "--n", "60"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = p.join("boundary-marker-epsilon.txt");
    assert!(b.exists());
    let b = b.to_str().unwrap();

    // The boundary belongs to t_m = 40.
    assert_eq!(code(&bdk(p, &["edit", "--boundary", b, "--zeta", "3", "--tm", "30"])), 3);
    assert_eq!(code(&bdk(p, &["edit", "--boundary", b, "--zeta", "3,1"])), 3);

    let o = bdk(p, &["edit", "--boundary", b, "--zeta", "4", "--flip", "--n", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["inputs.ppm", "unedited.ppm", "edited.ppm", "edit.json"] {
        assert!(p.join(f).exists(), "{f}");
    }
    assert!(std::fs::read(p.join("edited.ppm")).unwrap().starts_with(b"P6\n"));
    let m = manifest(p, "edit");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["checkpoint"][0], "builtin:toy");
    assert_eq!(m["boundaries"].as_object().unwrap().len(), 1);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(p.join("edit.json")).unwrap()).unwrap();
    assert_eq!(report["trace"]["eps_mutations"], serde_json::json!([40]));

    let o = bdk(p, &["report"]);
    assert_eq!(code(&o), 0);
    let md = std::fs::read_to_string(p.join("report.md")).unwrap();
    assert!(md.contains("| edit | 0 |"));
}

#[test]
fn invert_dumps_long_format_latents() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = bdk(p, &["invert", "--tm", "40", "--n", "3", "--space", "both"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(p.join("latents-epsilon.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["sample_id", "step", "coordinate_index", "value"]);
    assert_eq!(rdr.records().count(), 3 * 256);
    assert!(p.join("latents-h.csv").exists());
}
