//! End-to-end behavior of the `zipfa` binary: flags, exit codes, file
//! outputs.

use std::path::Path;
use std::process::{Command, Output};

fn zipfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zipfa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn simulate_small(dir: &Path, setting: &str, zero_pct: &str, seed: &str) {
    let out = zipfa(&[
        "simulate",
        "--setting",
        setting,
        "--zero-pct",
        zero_pct,
        "--seed",
        seed,
        "--n",
        "40",
        "--m",
        "20",
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_on_simulated_data_converges_and_writes_model() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0.2", "7");
    let model_path = dir.path().join("model.json");
    let out = zipfa(&[
        "fit",
        "--input",
        dir.path().join("counts.csv").to_str().unwrap(),
        "--rank",
        "3",
        "--output",
        model_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    assert!(line.contains("rank=3"), "{line}");
    assert!(line.contains("converged=true"), "{line}");
    let model = zipfa::factorize::load_model(&model_path).unwrap();
    assert_eq!(model.rank, 3);
    assert!(model.converged);
}

#[test]
fn fit_rejects_rank_zero_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0.2", "3");
    let out = zipfa(&[
        "fit",
        "--input",
        dir.path().join("counts.csv").to_str().unwrap(),
        "--rank",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--rank"));
}

#[test]
fn fit_reports_input_errors_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "sample_id,t1,t2\ns1,1,-4\ns2,2,3\n").unwrap();
    let out = zipfa(&["fit", "--input", bad.to_str().unwrap(), "--rank", "2"]);
    assert_eq!(out.status.code(), Some(2));

    let out = zipfa(&["fit", "--input", "/nonexistent/file.csv", "--rank", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cv_singleton_range_prints_the_only_candidate() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0.1", "11");
    let out = zipfa(&[
        "cv",
        "--input",
        dir.path().join("counts.csv").to_str().unwrap(),
        "--ranks",
        "3:3",
        "--folds",
        "4",
        "--seed",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim(), "3");
}

#[test]
fn cv_rejects_bad_range() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0.1", "11");
    let counts = dir.path().join("counts.csv");
    for bad in ["5:2", "0:3", "x:y"] {
        let out = zipfa(&["cv", "--input", counts.to_str().unwrap(), "--ranks", bad]);
        assert_eq!(out.status.code(), Some(2), "range {bad}");
    }
}

#[test]
fn cv_repeats_add_a_repeat_column_with_fresh_folds() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0.1", "13");
    let csv_path = dir.path().join("cv.csv");
    let out = zipfa(&[
        "cv",
        "--input",
        dir.path().join("counts.csv").to_str().unwrap(),
        "--ranks",
        "2:3",
        "--folds",
        "3",
        "--repeats",
        "3",
        "--seed",
        "5",
        "--output",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "repeat,rank,fold,heldout_loglik");
    // 3 repeats x 2 ranks x 3 folds detail rows
    let detail = lines[1..].iter().take_while(|l| !l.is_empty()).count();
    assert_eq!(detail, 18);
    // summary block: 3 total rows per rank
    let summary_header = lines.iter().position(|&l| l == "repeat,rank,total_loglik,selected").unwrap();
    let rank2_totals = lines[summary_header..]
        .iter()
        .filter(|l| l.split(',').nth(1) == Some("2"))
        .count();
    assert_eq!(rank2_totals, 3);
}

#[test]
fn simulate_writes_manifest_with_calibrated_tau() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "2", "0.2", "21");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["setting"], "2");
    assert!(manifest["tau"].as_f64().is_some());
    let realized = manifest["realized_zero_fraction"].as_f64().unwrap();
    assert!((realized - 0.2).abs() < 0.06, "realized {realized}");
}

#[test]
fn simulate_zero_pct_zero_writes_empty_mask() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0", "2");
    let mask = std::fs::read_to_string(dir.path().join("mask.csv")).unwrap();
    assert_eq!(mask, "row_index,col_index\n");
}

#[test]
fn simulate_rejects_unattainable_settings() {
    let dir = tempfile::tempdir().unwrap();
    let out = zipfa(&[
        "simulate",
        "--setting",
        "5",
        "--zero-pct",
        "0.95",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = zipfa(&[
        "simulate",
        "--setting",
        "9",
        "--zero-pct",
        "0.2",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_grid_has_expected_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bench.csv");
    // 1 setting x 1 fraction x 2 replicates x 2 methods = 4 records; tiny
    // iteration cap keeps this test fast.
    let out = zipfa(&[
        "benchmark",
        "--settings",
        "1",
        "--zero-pcts",
        "0.2",
        "--replicates",
        "2",
        "--methods",
        "zipfa,logsvd",
        "--seed",
        "3",
        "--max-iter",
        "2",
        "--output",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let data_rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("method,"))
        .collect();
    assert_eq!(data_rows.len(), 4);
    for row in data_rows {
        assert_eq!(row.split(',').count(), 9);
    }
}

#[test]
fn diagnose_emits_rows_and_fit_footer() {
    let dir = tempfile::tempdir().unwrap();
    simulate_small(dir.path(), "1", "0.3", "17");
    let out_path = dir.path().join("diag.csv");
    let out = zipfa(&[
        "diagnose",
        "--input",
        dir.path().join("counts.csv").to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("taxon_id,zero_fraction,mean_log_nonzero,flagged\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 21);
    // the generating mechanism links zero share negatively to the rate, so
    // both fitted slopes must come out negative
    for fit_line in text.lines().filter(|l| l.starts_with("# fit_")) {
        let slope: f64 = fit_line
            .split("slope=")
            .nth(1)
            .expect("slope field")
            .trim()
            .parse()
            .unwrap();
        assert!(slope < 0.0, "{fit_line}");
    }
    // flagged column agrees with the 2.5 threshold
    for line in text.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[2].is_empty() {
            assert_eq!(fields[3], "false");
            continue;
        }
        let meanlog: f64 = fields[2].parse().unwrap();
        let flagged: bool = fields[3].parse().unwrap();
        assert_eq!(flagged, meanlog > 2.5, "{line}");
    }
}

#[test]
fn diagnose_keeps_all_zero_taxon_with_missing_meanlog() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    std::fs::write(
        &counts,
        "sample_id,t1,t2,t3\ns1,0,3,10\ns2,0,4,30\ns3,0,0,90\ns4,0,5,270\n",
    )
    .unwrap();
    let out_path = dir.path().join("diag.csv");
    let out = zipfa(&[
        "diagnose",
        "--input",
        counts.to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let t1_row = text.lines().find(|l| l.starts_with("t1,")).unwrap();
    assert_eq!(t1_row, "t1,1,,false");
}
