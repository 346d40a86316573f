use std::fs;
use std::path::Path;
use std::process::Command;

use fdaselect::core::{generate_scenario, ScenarioSpec};
use fdaselect::io::{
    read_coefficients, write_curves, COEFFICIENT_HEADER, FITTED_HEADER, SUMMARY_HEADER,
};
use serde_json::Value;
use tempfile::TempDir;

fn fdaselect(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fdaselect"))
        .args(args)
        .output()
        .expect("spawn")
}

fn scenario1_file(dir: &Path) -> String {
    let data = generate_scenario(&ScenarioSpec::scenario1(11)).unwrap();
    let path = dir.join("s1.csv");
    write_curves(fs::File::create(&path).unwrap(), &data).unwrap();
    path.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("fit_report.json")).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn simulate_scenario3_writes_one_row_per_coefficient() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let o = fdaselect(&[
        "simulate",
        "--scenario",
        "3",
        "--replicates",
        "5",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER.join(","));
    assert_eq!(lines.len() - 1, 10);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"]["replicates"].as_array().unwrap().len(), 5);
    assert!(manifest["version"].as_str().is_some_and(|v| !v.is_empty()));
}

#[test]
fn simulate_is_deterministic_given_seed() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = fdaselect(&[
            "simulate",
            "--scenario",
            "1",
            "--replicates",
            "3",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read_to_string(out.join("summary.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn simulate_misspecification_writes_both_tables() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("mis");
    let o = fdaselect(&[
        "simulate",
        "--scenario",
        "1",
        "--replicates",
        "2",
        "--seed",
        "4",
        "--misspecification",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.csv").exists());
    assert!(out.join("summary_independent.csv").exists());
}

#[test]
fn fit_stays_within_iteration_cap_and_independent_shrinks_noise() {
    let tmp = TempDir::new().unwrap();
    let data = scenario1_file(tmp.path());
    let corr = tmp.path().join("corr");
    let indep = tmp.path().join("indep");
    let base = [
        "fit", "--data", &data, "--basis", "bspline", "--K", "10", "--degree", "3", "--seed", "2",
    ];
    let o = fdaselect(&[&base[..], &["--out", corr.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = fdaselect(
        &[
            &base[..],
            &["--independent", "--out", indep.to_str().unwrap()],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let (rc, ri) = (report(&corr), report(&indep));
    assert!(rc["iterations"].as_u64().unwrap() <= 100);
    assert!(rc["w_hat"].as_f64().unwrap() > 0.0);
    assert!(ri["w_hat"].is_null());
    assert!(ri["sigma2_hat"].as_f64().unwrap() < rc["sigma2_hat"].as_f64().unwrap());

    assert_eq!(
        header(&corr.join("coefficients.csv")),
        COEFFICIENT_HEADER.join(",")
    );
    assert_eq!(header(&corr.join("curve.csv")), FITTED_HEADER.join(","));
    assert_eq!(
        fs::read_to_string(corr.join("curve.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 5 * 100
    );
}

#[test]
fn coefficient_csv_round_trips_bitwise() {
    let tmp = TempDir::new().unwrap();
    let data = scenario1_file(tmp.path());
    let out = tmp.path().join("fit");
    let o = fdaselect(&[
        "fit",
        "--data",
        &data,
        "--K",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rows = read_coefficients(fs::File::open(out.join("coefficients.csv")).unwrap()).unwrap();
    let xi = &report(&out)["coefficients"]["xi_hat"];
    let cols = xi["cols"].as_u64().unwrap() as usize;
    let values: Vec<f64> = xi["data"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(rows.len(), values.len());
    for (n, row) in rows.iter().enumerate() {
        assert_eq!(row.basis, n % cols + 1);
        assert_eq!(row.xi_hat.to_bits(), values[n].to_bits());
    }
    // 17 significant digits in every numeric cell.
    let text = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let cell = text.lines().nth(1).unwrap().split(',').nth(2).unwrap();
    let mantissa = cell
        .split('e')
        .next()
        .unwrap()
        .trim_start_matches('-')
        .replace('.', "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn bands_from_saved_state_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let data = scenario1_file(tmp.path());
    let out = tmp.path().join("fit");
    assert!(fdaselect(&[
        "fit",
        "--data",
        &data,
        "--K",
        "10",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let state = out.join("state.json");
    let run = |seed: &str| {
        let o = fdaselect(&[
            "bands",
            "--state",
            state.to_str().unwrap(),
            "--draws",
            "200",
            "--level",
            "0.95",
            "--seed",
            seed,
        ]);
        assert!(o.status.success());
        String::from_utf8(o.stdout).unwrap()
    };
    let a = run("5");
    assert_eq!(a, run("5"));
    assert_ne!(a, run("6"));
    // Five curves of 100 points plus the averaged band.
    assert_eq!(a.lines().count(), 1 + 6 * 100);
}

#[test]
fn jitter_resolves_tied_times() {
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("curve_id,t,y\n");
    for j in 0..30 {
        let t = (j / 2) as f64 / 15.0;
        text.push_str(&format!("a,{t},{}\n", (6.0 * t).sin()));
    }
    let path = tmp.path().join("ties.csv");
    fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let out = tmp.path().join("o");
    let o = fdaselect(&[
        "fit",
        "--data",
        p,
        "--K",
        "6",
        "--independent",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = fdaselect(&[
        "fit",
        "--data",
        p,
        "--K",
        "6",
        "--independent",
        "--jitter",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(fdaselect(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        fdaselect(&[
            "simulate",
            "--scenario",
            "7",
            "--replicates",
            "1",
            "--seed",
            "1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        fdaselect(&["fit", "--data", "/no/such/file.csv", "--out", out])
            .status
            .code(),
        Some(2)
    );

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "curve_id,t,y\na,0,1\na,0.5,oops\na,1,2\n").unwrap();
    let o = fdaselect(&["fit", "--data", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}
