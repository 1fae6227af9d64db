//! End-to-end checks of the binary: pinned outputs, exit codes, and
//! byte-level reproducibility.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use fractal_calc::calculus::{read_grid_csv, write_grid_csv};
use fractal_calc::structure::Context;
use fractal_calc::Rational;

fn fractal_calc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fractal-calc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fractal-calc-cli-{}-{}", name, std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn eig_reports_the_standard_spectrum() {
    let out = fractal_calc(&["eig", "sg"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("json output");
    assert_eq!(v["fractal"], "sg");
    let corners = v["corners"].as_array().expect("corner array");
    assert_eq!(corners.len(), 3);
    for corner in corners {
        let lambda = corner["lambda"].as_array().expect("lambda array");
        let expect = [1.0, 0.6, 0.2];
        assert_eq!(lambda.len(), expect.len());
        for (l, e) in lambda.iter().zip(expect) {
            assert!((l.as_f64().unwrap() - e).abs() < 1e-9);
        }
    }
}

#[test]
fn vicsek_experiment_confirms_the_refusal() {
    let out = fractal_calc(&["experiment", "vicsek"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("degenerate structure correctly refused"));
}

fn limit_token(report: &str) -> String {
    let line = report
        .lines()
        .find(|l| l.trim_start().starts_with("limit "))
        .expect("limit line");
    line.trim_start()
        .split_whitespace()
        .nth(1)
        .expect("limit value")
        .to_string()
}

#[test]
fn derivative_limit_matches_the_normal_convention() {
    let args = ["derivative", "sg", "--fn", "harmonic:0,1,1", "--vertex", ":1", "--k", "2"];
    let out = fractal_calc(&args);
    assert_eq!(out.status.code(), Some(0));
    let limit: f64 = limit_token(&stdout(&out)).parse().expect("float limit");
    assert!((limit + 2.0).abs() < 1e-9);

    let mut exact = args.to_vec();
    exact.extend(["--mode", "rational"]);
    let out = fractal_calc(&exact);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(limit_token(&stdout(&out)), "-2");
}

#[test]
fn extend_csv_round_trips() {
    let dir = tmp("roundtrip");
    let args = [
        "extend", "sg", "--fn", "harmonic:0,1,1", "-m", "3", "--mode", "rational",
    ];
    let mut filed = args.to_vec();
    filed.extend(["--out", dir.to_str().unwrap()]);
    let out = fractal_calc(&filed);
    assert_eq!(out.status.code(), Some(0));
    let bytes = fs::read(dir.join("extend.csv")).expect("csv written");

    let ctx: Context<Rational> = Context::preset("sg").unwrap();
    let grid = read_grid_csv(&ctx, &mut bytes.as_slice()).expect("csv re-imports");
    let mut again = Vec::new();
    write_grid_csv(&grid, &mut again).unwrap();
    assert_eq!(bytes, again);

    let piped = fractal_calc(&args);
    assert_eq!(piped.stdout, bytes);
}

#[test]
fn equal_invocations_produce_equal_bytes() {
    let a = fractal_calc(&["experiment", "thm1.6", "--max-m", "6"]);
    let b = fractal_calc(&["experiment", "thm1.6", "--max-m", "6"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn scenario_failures_exit_one() {
    let out = fractal_calc(&["experiment", "thm1.4", "--max-m", "6"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("result FAIL"));
}

#[test]
fn unknown_names_exit_two() {
    for args in [
        ["eig", "nope"].as_slice(),
        &["frobnicate"],
        &["experiment", "nope"],
        &["experiment", "thm1.4", "--preset", "nope"],
        &["extend", "sg", "--fn", "poisson:const=1"],
        &["solve", "sg", "--fn", "zero"],
        &["extend", "sg", "--fn", "harmonic:0,1"],
        &["derivative", "sg", "--fn", "zero", "--vertex", "9:1"],
        &["derivative", "sg", "--fn", "zero", "--vertex", ":1", "--k", "4"],
        &["experiment", "thm1.4", "--param", "corner"],
    ] {
        let out = fractal_calc(args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
        assert!(!out.stderr.is_empty(), "args {args:?}");
    }
}

#[test]
fn plots_need_embedded_coordinates() {
    let dir = tmp("hex-plot");
    let out = fractal_calc(&[
        "extend",
        "hexagasket",
        "--fn",
        "zero",
        "-m",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "--plot",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("extend.csv").exists());
    assert!(!dir.join("extend.svg").exists());

    let dir = tmp("sg-plot");
    let out = fractal_calc(&[
        "solve",
        "sg",
        "--fn",
        "poisson:const=1",
        "-m",
        "3",
        "--out",
        dir.to_str().unwrap(),
        "--plot",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let svg = fs::read_to_string(dir.join("solve.svg")).expect("svg written");
    assert!(svg.starts_with("<svg"));
}

#[test]
fn experiment_files_cover_every_series() {
    let dir = tmp("exp-out");
    let out = fractal_calc(&[
        "experiment",
        "thm1.6",
        "--max-m",
        "6",
        "--out",
        dir.to_str().unwrap(),
        "--plot",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.join("thm1.6.txt")).expect("report written");
    assert!(report.contains("result PASS"));
    let csv = fs::read_to_string(dir.join("thm1.6-sup-gradient-skew-mode.csv")).expect("series csv");
    assert!(csv.starts_with("m,value\n"));
    assert!(dir.join("thm1.6-sup-gradient-skew-mode.svg").exists());
}
