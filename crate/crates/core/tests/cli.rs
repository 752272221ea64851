use std::path::Path;
use std::process::Command;

use shufflesim::runner::{ResultRecord, CSV_HEADER};

const COMMANDS: &[&[&str]] = &[
    &["solve", "--n", "2-3", "--d", "0-1"],
    &["solve", "--task", "decision", "--n", "3", "--d", "1"],
    &["adversary", "--kind", "truncated", "--n", "3", "--d", "2"],
    &["adversary", "--kind", "classical", "--n", "6", "--d", "1", "--q", "5"],
    &["adversary", "--kind", "solver-qc", "--n", "2", "--d", "1"],
    &["adversary", "--kind", "violator", "--n", "2", "--d", "1"],
    &["o2h", "--n", "2", "--d", "1", "--samples", "10", "--resamples", "50"],
    &["sweep", "--n", "2-3", "--d", "1-2"],
    &["sample-oracle", "--n", "2", "--d", "2"],
];

fn run(args: &[&str], out: &Path, serial: bool, format: &str) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shufflesim"));
    cmd.args(args)
        .args(["--seed", "7", "--trials", "30", "--format", format])
        .arg("--out")
        .arg(out);
    if serial {
        cmd.arg("--serial");
    }
    let status = cmd.status().unwrap();
    assert!(status.success(), "{args:?}");
    std::fs::read(out).unwrap()
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (i, args) in COMMANDS.iter().enumerate() {
        let formats: &[&str] = if args[0] == "sample-oracle" {
            &["json"]
        } else {
            &["json", "csv"]
        };
        for format in formats {
            let a = run(args, &dir.path().join(format!("{i}a.{format}")), true, format);
            let b = run(args, &dir.path().join(format!("{i}b.{format}")), false, format);
            let c = run(args, &dir.path().join(format!("{i}c.{format}")), false, format);
            assert_eq!(a, b, "{args:?} serial vs parallel");
            assert_eq!(b, c, "{args:?} rerun");
            assert!(!a.is_empty());
        }
    }
}

#[test]
fn env_overrides_and_record_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_shufflesim"))
        .arg("solve")
        .env("SHUFFLESIM_TRIALS", "12")
        .env("SHUFFLESIM_FORMAT", "csv")
        .env("SHUFFLESIM_N", "2")
        .env("SHUFFLESIM_D", "1-2")
        .env("SHUFFLESIM_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r.starts_with("solve_search,2,") && r.contains(",solver,12,")));

    let json = dir.path().join("sweep.json");
    let status = Command::new(env!("CARGO_BIN_EXE_shufflesim"))
        .args(["--trials", "20", "sweep", "--n", "2", "--d", "1"])
        .arg("--out")
        .arg(&json)
        .status()
        .unwrap();
    assert!(status.success());
    let recs: Vec<ResultRecord> = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(recs.len(), 3);
    for r in &recs {
        assert!((0.0..=1.0).contains(&r.success));
        assert!(r.ci_lo <= r.success && r.success <= r.ci_hi);
        assert!(!serde_json::to_string(r).unwrap().contains("bot"));
    }
}

#[test]
fn bad_arguments_fail() {
    for args in [
        &["solve", "--n", "5-2"][..],
        &["--trials", "0", "solve"],
        &["--format", "csv", "sample-oracle"],
    ] {
        let out = Command::new(env!("CARGO_BIN_EXE_shufflesim"))
            .args(args)
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?}");
    }
}
