//! Acceptance criterion 11: every CLI command rerun with identical flags and
//! seeds produces byte-identical outputs.
//!
//! The benchmark CSV is compared with its `runtime_s` column masked: that
//! column records wall-clock measurement, which no seed can pin down. All
//! other bytes of every output must match exactly.

use std::path::Path;
use std::process::Command;

fn zipfa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_zipfa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = zipfa(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {path:?}: {e}"))
}

fn strip_runtime_column(csv: &[u8]) -> String {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("method,") {
                line.to_string()
            } else {
                line.rsplit_once(',').map(|(rest, _)| rest.to_string()).unwrap_or_default()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_11_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (run_a, run_b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&run_a).unwrap();
    std::fs::create_dir_all(&run_b).unwrap();
    let mut checked = Vec::new();

    // simulate: all four output files byte-identical.
    for base in [&run_a, &run_b] {
        run_ok(&[
            "simulate",
            "--setting",
            "1",
            "--zero-pct",
            "0.2",
            "--seed",
            "99",
            "--n",
            "60",
            "--m",
            "30",
            "--output",
            base.join("sim").to_str().unwrap(),
        ]);
    }
    for file in ["counts.csv", "truth.json", "mask.csv", "manifest.json"] {
        assert_eq!(
            read(&run_a.join("sim").join(file)),
            read(&run_b.join("sim").join(file)),
            "simulate output {file} differs between identical runs"
        );
    }
    checked.push("simulate");

    // fit: model document and stdout summary byte-identical.
    let counts = run_a.join("sim").join("counts.csv");
    let mut fit_stdout = Vec::new();
    for base in [&run_a, &run_b] {
        let model = base.join("model.json");
        fit_stdout.push(run_ok(&[
            "fit",
            "--input",
            counts.to_str().unwrap(),
            "--rank",
            "3",
            "--output",
            model.to_str().unwrap(),
        ]));
    }
    assert_eq!(
        read(&run_a.join("model.json")),
        read(&run_b.join("model.json")),
        "fit model documents differ between identical runs"
    );
    assert_eq!(fit_stdout[0], fit_stdout[1]);
    checked.push("fit");

    // fit with an explicit mask file.
    let mask = run_a.join("sim").join("mask.csv");
    let mut masked_stdout = Vec::new();
    for base in [&run_a, &run_b] {
        let model = base.join("model_masked.json");
        masked_stdout.push(run_ok(&[
            "fit",
            "--input",
            counts.to_str().unwrap(),
            "--rank",
            "2",
            "--mask",
            mask.to_str().unwrap(),
            "--output",
            model.to_str().unwrap(),
        ]));
    }
    assert_eq!(
        read(&run_a.join("model_masked.json")),
        read(&run_b.join("model_masked.json"))
    );
    assert_eq!(masked_stdout[0], masked_stdout[1]);
    checked.push("fit --mask");

    // cv: table CSV and selected rank byte-identical.
    let mut cv_stdout = Vec::new();
    for base in [&run_a, &run_b] {
        let csv = base.join("cv.csv");
        cv_stdout.push(run_ok(&[
            "cv",
            "--input",
            counts.to_str().unwrap(),
            "--ranks",
            "2:4",
            "--folds",
            "4",
            "--repeats",
            "2",
            "--seed",
            "5",
            "--output",
            csv.to_str().unwrap(),
        ]));
    }
    assert_eq!(read(&run_a.join("cv.csv")), read(&run_b.join("cv.csv")));
    assert_eq!(cv_stdout[0], cv_stdout[1]);
    checked.push("cv");

    // diagnose: CSV byte-identical.
    for base in [&run_a, &run_b] {
        run_ok(&[
            "diagnose",
            "--input",
            counts.to_str().unwrap(),
            "--output",
            base.join("diag.csv").to_str().unwrap(),
        ]);
    }
    assert_eq!(read(&run_a.join("diag.csv")), read(&run_b.join("diag.csv")));
    checked.push("diagnose");

    // benchmark: byte-identical apart from the wall-clock runtime column.
    for base in [&run_a, &run_b] {
        run_ok(&[
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
            "77",
            "--max-iter",
            "3",
            "--output",
            base.join("bench.csv").to_str().unwrap(),
        ]);
    }
    assert_eq!(
        strip_runtime_column(&read(&run_a.join("bench.csv"))),
        strip_runtime_column(&read(&run_b.join("bench.csv"))),
        "benchmark outputs differ beyond the runtime column"
    );
    checked.push("benchmark (runtime_s masked)");

    println!(
        "ACCEPTANCE 11 (CLI determinism, byte-identical reruns): PASS - {}",
        checked.join(", ")
    );
}
