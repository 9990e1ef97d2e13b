//! End-to-end command tests driving the CLI entry point in-process.

use serde_json::Value;
use std::path::PathBuf;
use wander3::cli::{run, sweep_csv_bytes, SWEEP_CSV_HEADER};

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("wander3_cli_{name}_{}", std::process::id()))
}

fn read_json(path: &PathBuf) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn constant_default_passes_and_reports() {
    let out = tmp("constant.json");
    let code = run([
        "wander3",
        "constant",
        "--segments",
        "200000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_eq!(doc["status"], "ok");
    let q = doc["results"]["quadrature"]["value"].as_f64().unwrap();
    let p = doc["results"]["polyline"]["value"].as_f64().unwrap();
    assert!((q - 4.074719732024625).abs() < 1e-9);
    assert!((q - p).abs() < 1e-6);
    let ratio = doc["results"]["value_over_two_pi"].as_f64().unwrap();
    assert!((ratio - 0.6485117870658022).abs() < 1e-9);
    std::fs::remove_file(&out).unwrap();
}

#[test]
fn constant_tighter_tol_same_value() {
    let out_a = tmp("constant_a.json");
    let out_b = tmp("constant_b.json");
    assert_eq!(
        run([
            "wander3",
            "constant",
            "--method",
            "quadrature",
            "--tol",
            "1e-8",
            "--out",
            out_a.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(
        run([
            "wander3",
            "constant",
            "--method",
            "quadrature",
            "--tol",
            "1e-12",
            "--out",
            out_b.to_str().unwrap()
        ]),
        0
    );
    let a = read_json(&out_a)["results"]["quadrature"].clone();
    let b = read_json(&out_b)["results"]["quadrature"].clone();
    assert!(b["error_estimate"].as_f64().unwrap() <= a["error_estimate"].as_f64().unwrap());
    assert!((a["value"].as_f64().unwrap() - b["value"].as_f64().unwrap()).abs() < 1e-10);
    std::fs::remove_file(&out_a).unwrap();
    std::fs::remove_file(&out_b).unwrap();
}

#[test]
fn constant_coarse_polyline_stays_within_its_error() {
    let out = tmp("constant_coarse.json");
    // 10 segments: large error estimate, still consistent with the value
    let code = run([
        "wander3",
        "constant",
        "--method",
        "polyline",
        "--segments",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    let v = doc["results"]["polyline"]["value"].as_f64().unwrap();
    let e = doc["results"]["polyline"]["error_estimate"]
        .as_f64()
        .unwrap();
    assert!(e > 1e-6, "coarse grid must admit a visible error: {e}");
    assert!((v - 4.074719732024625).abs() <= 10.0 * e);
    std::fs::remove_file(&out).unwrap();
}

#[test]
fn analyze_sin_example() {
    let out = tmp("analyze.json");
    let code = run([
        "wander3",
        "analyze",
        "--a",
        "0",
        "--b",
        "1",
        "--c",
        "0",
        "--init",
        "0,1,0",
        "--horizon",
        "62.83185307179586",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_eq!(doc["results"]["nu"], 21);
    let margin = doc["results"]["margin"].as_f64().unwrap();
    assert!((margin - 30.234095).abs() < 1e-3, "margin {margin}");
    std::fs::remove_file(&out).unwrap();
}

#[test]
fn analyze_constant_solution() {
    let out = tmp("analyze_const.json");
    let code = run([
        "wander3",
        "analyze",
        "--a",
        "0",
        "--b",
        "0",
        "--c",
        "0",
        "--init",
        "1,0,0",
        "--horizon",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_eq!(doc["results"]["nu"], 0);
    assert!(doc["results"]["gamma"].as_f64().unwrap().abs() < 1e-6);
    assert!(doc["results"]["margin"].as_f64().unwrap() > 0.0);
    std::fs::remove_file(&out).unwrap();
}

#[test]
fn analyze_malformed_expression_exits_2() {
    assert_eq!(run(["wander3", "analyze", "--a", "t++"]), 2);
}

#[test]
fn extremal_rejects_too_few_periods() {
    assert_eq!(
        run(["wander3", "extremal", "--delta", "0.5", "--periods", "1"]),
        2
    );
}

#[test]
fn extremal_runs_and_reports() {
    let out = tmp("extremal.json");
    let model = tmp("model.json");
    let code = run([
        "wander3",
        "extremal",
        "--delta",
        "0.5",
        "--periods",
        "3",
        "--model-out",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    let ratio = doc["results"]["ratio"].as_f64().unwrap();
    let floor = doc["results"]["ratio_floor"].as_f64().unwrap();
    assert!(ratio > floor && ratio < floor + 0.5 / (2.0 * std::f64::consts::PI));
    assert_eq!(doc["results"]["nu_per_period"], 2);
    // exported tables are usable: monotone time, finite coefficients
    let tables = read_json(&model);
    let rows = tables["rows"].as_array().unwrap();
    assert!(rows.len() > 100);
    let mut prev = -1.0;
    for r in rows {
        let t = r["t"].as_f64().unwrap();
        assert!(t > prev);
        prev = t;
        for k in ["a", "b", "c", "f", "f_prime", "phi"] {
            assert!(r[k].as_f64().unwrap().is_finite());
        }
    }
    std::fs::remove_file(&out).unwrap();
    std::fs::remove_file(&model).unwrap();
}

#[test]
fn sweep_records_blowup_items_as_rows() {
    // amplitude far beyond anything integrable in f64 over this horizon
    let csv = sweep_csv_bytes(6, 7, 50.0, 60.0, 1e-9, 1e-12);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with(SWEEP_CSV_HEADER));
    let errors = text
        .lines()
        .filter(|l| l.contains(",integration_error,"))
        .count();
    let oks = text.lines().filter(|l| l.contains(",ok,")).count();
    assert!(errors > 0, "expected blow-up rows:\n{text}");
    assert_eq!(errors + oks, 6, "every item gets exactly one row");
}

#[test]
fn config_file_drives_analyze_and_flags_override() {
    let cfg = tmp("config.ini");
    std::fs::write(
        &cfg,
        "[analyze]\na = 0\nb = 1\nc = 0\ninit = 0,1,0\nhorizon = 10\n",
    )
    .unwrap();
    let out = tmp("analyze_cfg.json");
    let code = run([
        "wander3",
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    // zeros of sin on [0, 10]: {0, pi, 2 pi, 3 pi}
    assert_eq!(doc["results"]["nu"], 4);
    assert_eq!(doc["config"]["horizon"].as_f64().unwrap(), 10.0);
    // a flag overrides the file
    let code = run([
        "wander3",
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--horizon",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let doc = read_json(&out);
    assert_eq!(doc["results"]["nu"], 2);
    std::fs::remove_file(&cfg).unwrap();
    std::fs::remove_file(&out).unwrap();
}
