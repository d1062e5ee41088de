//! Black-box tests of the command-line binary: exit codes, reproduction
//! presets, and byte-level determinism of emitted artifacts.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pulsedose"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pulsedose-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn reproduce_presets_all_pass() {
    for case in ["1", "2", "3", "pib"] {
        let out = bin().args(["reproduce", "--case", case]).output().unwrap();
        let table = stdout_str(&out);
        assert!(
            out.status.success(),
            "case {case} exited {:?}:\n{table}\n{}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(table.starts_with("quantity,paper,computed,abs_diff,tol,pass\n"));
        assert!(!table.contains(",false"), "case {case} has failing rows:\n{table}");
    }
}

#[test]
fn reproduce_case_2_quotes_the_headline_values() {
    let out = bin().args(["reproduce", "--case", "2"]).output().unwrap();
    let table = stdout_str(&out);
    for needle in ["2.4755", "2.7085", "10.0000", "20.0000", "0.5673", "194.9872"] {
        assert!(table.contains(needle), "missing {needle} in:\n{table}");
    }
}

#[test]
fn invalid_horizon_is_a_config_error() {
    let out = bin()
        .args(["simulate", "--case", "2", "--horizon", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_case_is_a_config_error() {
    let out = bin().args(["analyze", "--case", "7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_refuses_a_non_contracting_controller() {
    // Steep amplitude feedback around the fixed point: |Q'(x*)| >> 1, so
    // no certificate applies even though the loop is negative feedback.
    let dir = scratch("refuse");
    let cfg = dir.join("steep.json");
    fs::write(
        &cfg,
        r#"{
  "mode": "custom",
  "k1_h": 2.4755256448569417,
  "k2_h_per_score": 0.0,
  "k3_mg_per_l": -3696.206206206206,
  "k4_mg_per_l_per_score": 500.0
}
"#,
    )
    .unwrap();
    let out = bin()
        .args(["analyze", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // The report is still emitted, with the refusal witness.
    let report = stdout_str(&out);
    assert!(report.contains("\"classification\": \"uncertified\""), "{report}");
    assert!(report.contains("refusal_witness_x"), "{report}");
}

#[test]
fn bounds_refuses_mixed_feedback() {
    let out = bin().args(["bounds", "--case", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative-feedback"));
}

#[test]
fn design_certifies_case_2_globally() {
    let out = bin().args(["design", "--case", "2"]).output().unwrap();
    assert!(out.status.success());
    let report = stdout_str(&out);
    assert!(report.contains("\"classification\": \"globally-attracting\""), "{report}");
    assert!(report.contains("\"k2\": -0.1382"), "{report}");
}

#[test]
fn simulate_artifacts_are_deterministic() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for dir in [&a, &b] {
        let out = bin()
            .args([
                "simulate",
                "--case",
                "2",
                "--horizon",
                "24",
                "--step",
                "0.01",
                "--out",
                dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trace.csv", "impulses.csv", "audit.json"] {
        let (fa, fb) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }
    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t_h,x_mg_per_l,y_score,event\n"));
    assert!(trace.contains(",pre\n") && trace.contains(",post\n"));
}

#[test]
fn reproduce_output_is_deterministic() {
    let first = bin().args(["reproduce", "--case", "3"]).output().unwrap();
    let second = bin().args(["reproduce", "--case", "3"]).output().unwrap();
    assert_eq!(first.stdout, second.stdout);
}
