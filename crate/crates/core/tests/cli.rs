use std::process::Command;

use oxytaxis::cli::cli;
use oxytaxis::io::{read_timeseries, FieldDump};

fn code(args: &[&str]) -> i32 {
    cli(std::iter::once("oxytaxis").chain(args.iter().copied()))
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["bogus"]), 2);
    assert_eq!(code(&["run", "--scenario", "nope"]), 2);
    assert_eq!(code(&["run"]), 2);
    assert_eq!(code(&["check-bernstein", "--res", "2"]), 2);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("typo.toml", "nx = 8\nt_finl = 1.0\n"),
        ("neg.toml", "mu = -1.0\n"),
        ("junk.toml", "nx = = 3"),
    ] {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        assert_eq!(
            code(&[
                "run",
                "--config",
                p.to_str().unwrap(),
                "--out",
                dir.path().to_str().unwrap()
            ]),
            2,
            "{name}"
        );
    }
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&["run", "--config", missing.to_str().unwrap()]), 2);
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "preset = \"aerotaxis_drop\"\nnx = 12\nt_final = 0.2\ndt = 0.01\nreport_every = 0.05\nkappa_edges = \"top\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--snapshot-every",
        "2",
    ];
    assert_eq!(code(&args), 0);

    let reports = read_timeseries(&out.join("timeseries.csv")).unwrap();
    assert_eq!(reports.len(), 5);
    assert!(reports.iter().all(|r| r.is_finite()));
    let dump = FieldDump::read(&out.join("field_final.txt")).unwrap();
    assert_eq!((dump.nx, dump.ny), (12, 12));
    assert!((dump.t - 0.2).abs() < 1e-12);
    assert!(out.join("field_00000.txt").exists() && out.join("field_00002.txt").exists());
    assert!(out.join("steps.csv").exists() && out.join("config.toml").exists());

    // the echoed config reproduces the run
    let again = dir.path().join("again");
    let echoed = out.join("config.toml");
    assert_eq!(
        code(&[
            "run",
            "--config",
            echoed.to_str().unwrap(),
            "--out",
            again.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(
        std::fs::read(out.join("timeseries.csv")).unwrap(),
        std::fs::read(again.join("timeseries.csv")).unwrap()
    );
}

#[test]
fn small_checks_pass() {
    assert_eq!(code(&["check-bernstein", "--n", "3", "--res", "32", "--json"]), 0);
    assert_eq!(code(&["eigenbasis", "--res", "6", "--json"]), 0);
    assert_eq!(code(&["version"]), 0);
}

#[test]
fn binary_reports_json() {
    let exe = env!("CARGO_BIN_EXE_oxytaxis");
    let out = Command::new(exe).args(["version", "--json"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["name"], "oxytaxis");

    let out = Command::new(exe).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
