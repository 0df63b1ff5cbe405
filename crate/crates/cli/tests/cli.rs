//! The `bvs` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bvs_cli::ingest::{ingest_csv, table_from_dataset, write_csv, Table};
use bvs_core::oracle::{enumerate_linear, quadrature_count};
use bvs_core::synthetic;
use nalgebra::DMatrix;
use proptest::prelude::*;
use tempfile::TempDir;

fn bvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bvs")).args(args).output().expect("binary runs")
}

fn write_dataset(dir: &TempDir, name: &str, data: &bvs_core::Dataset) -> PathBuf {
    let path = dir.path().join(name);
    write_csv(&path, &table_from_dataset(data), "y", Some("c")).unwrap();
    path
}

/// Rows of the results table after the header line, as `(name, values)`.
fn table_rows(text: &str, header: &str) -> Vec<(String, Vec<String>)> {
    let mut lines = text.lines().skip_while(|l| *l != header);
    assert_eq!(lines.next(), Some(header), "{text}");
    lines
        .map(|l| {
            let mut cells = l.split('\t').map(str::to_string);
            (cells.next().unwrap(), cells.collect())
        })
        .collect()
}

fn pip_column(text: &str, header: &str) -> Vec<f64> {
    table_rows(text, header).iter().map(|(_, v)| v[0].parse().unwrap()).collect()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn default_linear_run_reproduces_enumeration() {
    let dir = TempDir::new().unwrap();
    let data = synthetic::linear_benchmark(0);
    let input = write_dataset(&dir, "bench.csv", &data);
    let exact = enumerate_linear(&data, 0.5, 0.01, None).unwrap().pips;
    let out = stdout(&bvs(&["run", "--input", s(&input), "--response", "y"]));
    let pips = pip_column(&out, "covariate\tpip\tbeta_mean\tbeta_sd");
    assert_eq!(pips.len(), 10);
    let err = pips.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 0.02, "{err}: {pips:?} vs {exact:?}");
    assert!(out.contains("# summary.weight_variance\t"));
    assert!(out.contains("# config.h\t0.5\n"));
}

#[test]
fn oversized_subset_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(&dir, "bench.csv", &synthetic::linear_benchmark(0));
    let o = bvs(&["run", "--input", s(&input), "--response", "y", "--subset-size", "11"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subset size"));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(&dir, "bench.csv", &synthetic::binomial_benchmark(0));
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = bvs(&[
            "run", "--input", s(&input), "--response", "y", "--total-count", "c", "--likelihood", "binomial",
            "--iterations", "3000", "--burn-in", "500", "--seed", "7", "--chains", "2", "--output", s(&path),
        ]);
        stdout(&o);
        std::fs::read(path).unwrap()
    };
    let a = run("a.tsv");
    assert!(!a.is_empty());
    assert_eq!(a, run("b.tsv"));
}

#[test]
fn json_output_carries_the_trace() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(&dir, "nb.csv", &synthetic::negbin_binary_effect(60, 4, 0.6, 5.0, 1.0, 3));
    let out = stdout(&bvs(&[
        "run", "--input", s(&input), "--response", "y", "--likelihood", "negbin", "--h-alpha", "1", "--h-beta",
        "3", "--iterations", "600", "--burn-in", "100", "--trace", "--format", "json",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["covariates"].as_array().unwrap().len(), 4);
    assert_eq!(v["chains"][0]["trace"].as_array().unwrap().len(), 600);
    assert!(v["summary"]["nu_mean"].as_f64().unwrap() > 0.0);
    let h = &v["summary"]["h"];
    assert!(h["q025"].as_f64().unwrap() <= h["median"].as_f64().unwrap());
    assert!(h["median"].as_f64().unwrap() <= h["q975"].as_f64().unwrap());
    assert!(v["config"]["psi0"].is_number());
}

#[test]
fn data_errors_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x1,y\n1,2\nNaN,3\n").unwrap();
    let o = bvs(&["run", "--input", s(&path), "--response", "y"]);
    assert_eq!(o.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("line 3") && msg.contains("x1"), "{msg}");

    let o = bvs(&["run", "--input", s(&path), "--response", "nope"]);
    assert_eq!(o.status.code(), Some(3));
    let o = bvs(&["run", "--input", s(&dir.path().join("missing.csv")), "--response", "y"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(bvs(&["run", "--response", "y"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let input = write_dataset(&dir, "bench.csv", &synthetic::linear_benchmark(0));
    let o = bvs(&["run", "--input", s(&input), "--response", "y", "--burn-in", "10", "--iterations", "5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bvs(&["run", "--input", s(&input), "--response", "y", "--likelihood", "binomial"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn standardized_ingestion() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("raw.csv");
    std::fs::write(&path, "a\tb\ty\n1\t10\t0.5\n2\t30\t1.5\n4\t20\t-0.2\n7\t-5\t0.1\n").unwrap();
    let mut t = ingest_csv(&path, "y", None).unwrap();
    t.standardize().unwrap();
    for j in 0..t.p() {
        let col: Vec<f64> = t.x.column(j).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / 4.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(mean.abs() <= 1e-12 && (sd - 1.0).abs() <= 1e-12);
    }
    let o = bvs(&["run", "--input", s(&path), "--response", "y", "--standardize", "--center-response",
        "--iterations", "200", "--burn-in", "50"]);
    assert!(stdout(&o).contains("# config.standardize\ttrue\n"));
}

#[test]
fn oracle_enumeration_table() {
    let dir = TempDir::new().unwrap();
    let data = synthetic::linear_benchmark(0);
    let input = write_dataset(&dir, "bench.csv", &data);
    let out = stdout(&bvs(&["oracle", "--input", s(&input), "--response", "y", "--h", "0.2"]));
    let rows = table_rows(&out, "covariate\tpip");
    let exact = enumerate_linear(&data, 0.2, 0.01, None).unwrap().pips;
    assert_eq!(rows.len(), 10);
    for ((name, v), (j, e)) in rows.iter().zip(exact.iter().enumerate()) {
        assert_eq!(name, &format!("x{}", j + 1));
        assert_eq!(v[0].parse::<f64>().unwrap(), *e);
    }
    assert!(out.contains("# oracle.method\tenumeration\n"));
}

#[test]
fn oracle_rejects_large_problems() {
    let dir = TempDir::new().unwrap();
    let input = write_dataset(&dir, "wide.csv", &synthetic::planted_linear(40, 25, &[0], &[1.0], 1.0, 1));
    let o = bvs(&["oracle", "--input", s(&input), "--response", "y"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too large"));
}

#[test]
fn oracle_binomial_quadrature() {
    let dir = TempDir::new().unwrap();
    let data = synthetic::binomial_benchmark(0);
    let input = write_dataset(&dir, "bin.csv", &data);
    let out = stdout(&bvs(&[
        "oracle", "--input", s(&input), "--response", "y", "--total-count", "c", "--likelihood", "binomial",
        "--h", "0.5", "--nu", "3.0",
    ]));
    let pips = pip_column(&out, "covariate\tpip");
    let exact = quadrature_count(&data, 0.5, 0.01, 0.01, 1.0, 1e-8).unwrap().pips;
    assert_eq!(pips, exact);
    assert!(out.contains("# oracle.method\tquadrature\n"));
    assert!(out.contains("# oracle.nu\tNA\n"));
}

fn finite_decimal() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1_000_000i64..1_000_000, 0u32..8).prop_map(|(m, e)| m as f64 / 10f64.powi(e as i32)),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_inverts_write(
        (n, p) in (1usize..6, 1usize..5),
        seed in prop::collection::vec(finite_decimal(), 60),
        with_counts in any::<bool>(),
    ) {
        let x = DMatrix::from_fn(n, p, |i, j| seed[(i * p + j) % seed.len()]);
        let y: Vec<f64> = (0..n).map(|i| seed[(40 + i) % seed.len()]).collect();
        let table = Table {
            covariate_names: (0..p).map(|j| format!("v{j}")).collect(),
            x,
            y,
            total_counts: with_counts.then(|| (0..n).map(|i| (i + 1) as f64).collect()),
        };
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, &table, "resp", Some("trials")).unwrap();
        let back = ingest_csv(&path, "resp", with_counts.then_some("trials")).unwrap();
        prop_assert_eq!(back, table);
    }
}
