use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use tempfile::NamedTempFile;
use ucorr::forest::stream_rng;
use ucorr::{generate, RelationKind, RelationshipSpec};
use ucorr_cli::args::{BenchArgs, Cli, Command as Sub, ComputeArgs};
use ucorr_cli::commands::{bench_rows, compute, log_log_slope};

fn ucorr_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ucorr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_csv(rows: &[(f64, f64)], header: bool) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    if header {
        writeln!(f, "x,y").unwrap();
    }
    for (x, y) in rows {
        writeln!(f, "{x:.17e},{y:.17e}").unwrap();
    }
    f.flush().unwrap();
    f
}

fn circle_rows(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let s = generate(&RelationshipSpec {
        kind: RelationKind::Circle,
        n,
        noise: 0.0,
        seed,
    })
    .unwrap();
    s.xs().iter().copied().zip(s.ys().iter().copied()).collect()
}

fn compute_args(path: &Path, extra: &[&str]) -> ComputeArgs {
    let mut argv = vec!["ucorr", "compute", "--input", path.to_str().unwrap()];
    argv.extend_from_slice(extra);
    match Cli::parse_from(argv).command {
        Sub::Compute(a) => a,
        _ => unreachable!(),
    }
}

fn json_of(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn compute_reports_circle_dependence() {
    let file = write_csv(&circle_rows(300, 1), true);
    let out = ucorr_bin(&["compute", "--input", file.path().to_str().unwrap()]);
    let report = json_of(&out);
    for key in [
        "rho", "sigma0", "z", "p_value", "n", "m", "method", "config", "input_digest",
        "elapsed_ms", "version",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let rho = report["rho"].as_f64().unwrap();
    assert!(rho >= 0.6, "{rho}");
    assert!(report["p_value"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["n"], 300);
    assert_eq!(report["m"], 2000);
    assert_eq!(report["config"]["leaves"], 18);
    assert_eq!(report["config"]["min_leaf_width"], 9);
    assert!(out.stderr.is_empty());

    // The printed decimal is the exact value.
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let printed = text
        .lines()
        .find(|l| l.trim_start().starts_with("\"rho\""))
        .unwrap()
        .split(':')
        .nth(1)
        .unwrap()
        .trim()
        .trim_end_matches(',')
        .to_owned();
    assert_eq!(printed.parse::<f64>().unwrap().to_bits(), rho.to_bits());
}

#[test]
fn thread_count_does_not_change_the_report() {
    let file = write_csv(&circle_rows(250, 2), false);
    let p = file.path().to_str().unwrap();
    let one = json_of(&ucorr_bin(&["compute", "--input", p, "--threads", "1", "--seed", "9"]));
    let eight = json_of(&ucorr_bin(&["compute", "--input", p, "--threads", "8", "--seed", "9"]));
    assert_eq!(one["rho"].to_string(), eight["rho"].to_string());
    assert_eq!(one["p_value"].to_string(), eight["p_value"].to_string());
    assert_eq!(one["input_digest"], eight["input_digest"]);
}

#[test]
fn shuffled_files_are_rarely_significant() {
    let rows = circle_rows(300, 3);
    let mut significant = 0;
    for rep in 0..100u64 {
        let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
        rand::seq::SliceRandom::shuffle(ys.as_mut_slice(), &mut stream_rng(rep, 99));
        let shuffled: Vec<(f64, f64)> = rows.iter().map(|r| r.0).zip(ys).collect();
        let file = write_csv(&shuffled, false);
        let seed = rep.to_string();
        let report = compute(&compute_args(file.path(), &["--seed", &seed])).unwrap();
        if report.p_value < 0.05 {
            significant += 1;
        }
    }
    assert!((2..=10).contains(&significant), "{significant} of 100");
}

#[test]
fn permutation_p_value_option() {
    let file = write_csv(&circle_rows(120, 4), false);
    let report = compute(&compute_args(
        file.path(),
        &["--pvalue", "permutation", "--permutations", "19", "--trees", "30"],
    ))
    .unwrap();
    assert_eq!(report.p_value, 0.05);
    let out = ucorr_bin(&[
        "compute",
        "--input",
        file.path().to_str().unwrap(),
        "--pvalue",
        "permutation",
        "--permutations",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn csv_format_has_one_value_row() {
    let file = write_csv(&circle_rows(40, 5), false);
    let out = ucorr_bin(&["compute", "--input", file.path().to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("rho,sigma0,z,p_value,n,m,method"));
}

#[test]
fn input_errors_exit_3_with_line_numbers() {
    let mut f = NamedTempFile::new().unwrap();
    writeln!(f, "1,2\n3,4\n5,oops").unwrap();
    let out = ucorr_bin(&["compute", "--input", f.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
    assert!(out.stdout.is_empty());

    let out = ucorr_bin(&["compute", "--input", "/definitely/not/here.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn small_inputs_exit_4_citing_a2() {
    let file = write_csv(&circle_rows(9, 6), false);
    let out = ucorr_bin(&["compute", "--input", file.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr).unwrap().contains("A2"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(ucorr_bin(&["compute"]).status.code(), Some(2));
    assert_eq!(ucorr_bin(&["frobnicate"]).status.code(), Some(2));
    let out = ucorr_bin(&["power", "--relation", "spiral"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("circle") && err.contains("checkerboard"), "{err}");
}

#[test]
fn nulldist_csv() {
    let out = ucorr_bin(&["nulldist", "--n", "200", "--m", "2000", "--reps", "500"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 40 + 1);
    let header: Vec<&str> = lines[0].split(',').collect();
    let std_col = header.iter().position(|&h| h == "std").unwrap();
    let count_col = header.iter().position(|&h| h == "count").unwrap();
    let std: f64 = lines[1].split(',').nth(std_col).unwrap().parse().unwrap();
    assert!((0.036..=0.067).contains(&std), "{std}");
    let total: usize = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(count_col).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 500);

    let out = ucorr_bin(&["nulldist", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn power_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("power.csv");
    let out = ucorr_bin(&[
        "power",
        "--relation",
        "circle",
        "--coeff",
        "ucorr,pearson",
        "--noise",
        "0:100:25",
        "--reps",
        "100",
        "--n",
        "400",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0], "relation,coefficient,noise,n,reps,null_quantile_95,power");
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let power: f64 = f[6].parse().unwrap();
        assert!((0.0..=1.0).contains(&power));
        if f[1] == "ucorr" && f[2] == "0" {
            assert!(power >= 0.95, "{line}");
        }
    }
}

#[test]
fn bench_rows_sorted_and_scale_with_trees() {
    let argv = |trees: &str| {
        let cli = Cli::parse_from([
            "ucorr", "bench", "--sizes", "4000,1000,2000", "--trees", trees, "--threads", "1",
        ]);
        match cli.command {
            Sub::Bench(a) => a,
            _ => unreachable!(),
        }
    };
    let base: BenchArgs = argv("40");
    let rows = bench_rows(&base).unwrap();
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    assert_eq!(ns, vec![1000, 2000, 4000]);
    assert!(log_log_slope(&rows).unwrap() < 1.5);

    let doubled = bench_rows(&argv("80")).unwrap();
    let ratio = doubled[2].elapsed_ms / rows[2].elapsed_ms;
    assert!((1.4..=2.6).contains(&ratio), "ratio {ratio}");
}
