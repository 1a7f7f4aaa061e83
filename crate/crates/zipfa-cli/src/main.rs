//! Command-line surface for the zero-inflated Poisson factor analysis
//! pipeline. Machine-readable results go to standard output; progress and
//! diagnostics go to standard error.
//!
//! Exit codes: 0 success, 2 input or usage error, 3 non-convergence,
//! 4 no valid rank in cross-validation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use zipfa::data::{load_counts, HeldOutMask};
use zipfa::error::Error;
use zipfa::factorize::{save_model, zipfa_fit, FitOptions};
use zipfa::rankcv::{select_across_repeats, select_rank, write_cv_csv, CvConfig, CvResult};
use zipfa::sim::{
    derive_seed, generate_counts, run_benchmark, save_dataset, write_benchmark_csv,
    zero_pattern_diagnostic, Method, Setting, SimulationSpec,
};

#[derive(Parser)]
#[command(
    name = "zipfa",
    about = "Zero-inflated Poisson factor analysis for count matrices",
    version
)]
struct Cli {
    /// Worker threads for cross-validation cells and benchmark replicates
    /// (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a factor model to a count matrix.
    Fit(FitArgs),
    /// Select the factor rank by masked cross-validation.
    Cv(CvArgs),
    /// Generate a synthetic benchmark dataset.
    Simulate(SimulateArgs),
    /// Run the simulation benchmark grid.
    Benchmark(BenchmarkArgs),
    /// Per-taxon zero-percentage vs mean-log-count diagnostic.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Count matrix CSV (header `sample_id,<taxa...>`).
    #[arg(long)]
    input: PathBuf,
    /// Number of factors.
    #[arg(long)]
    rank: usize,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Relative log-likelihood tolerance.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Where to write the fitted model document.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional hold-out mask CSV (`row_index,col_index`), for reproducing
    /// masked fits.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    /// Candidate rank range `a:b` (inclusive) or a single rank.
    #[arg(long)]
    ranks: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Independent repetitions with fresh fold assignments.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Where to write the CV table CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Zero-generation setting: 1, 2, 3, 4, 5, 6.1 or 6.2.
    #[arg(long)]
    setting: String,
    /// Target fraction of inflated zeros.
    #[arg(long, default_value_t = 0.0)]
    zero_pct: f64,
    /// Shape parameter override (skips calibration).
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Output directory for counts.csv, truth.json, mask.csv, manifest.json.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Comma-separated settings, e.g. `1,2,6.1`.
    #[arg(long)]
    settings: String,
    /// Comma-separated inflated-zero fractions, e.g. `0,0.2,0.4`.
    #[arg(long)]
    zero_pcts: String,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    /// Comma-separated methods: zipfa, logsvd.
    #[arg(long, default_value = "zipfa,logsvd")]
    methods: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Where to write the results CSV.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    input: PathBuf,
    /// Where to write the per-taxon diagnostic CSV.
    #[arg(long)]
    output: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Selection(_) => 4,
        Error::NoConvergence { .. } | Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn usage_fail(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!("run `zipfa --help` for usage");
    ExitCode::from(2)
}

fn cmd_fit(args: &FitArgs) -> ExitCode {
    let a = match load_counts(&args.input) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    if args.rank == 0 || args.rank > a.n_samples().min(a.n_taxa()) {
        return usage_fail(&format!(
            "--rank must be in 1..={} for this matrix, got {}",
            a.n_samples().min(a.n_taxa()),
            args.rank
        ));
    }
    let mask = match &args.mask {
        Some(path) => match HeldOutMask::load(path, a.n_samples(), a.n_taxa()) {
            Ok(m) => Some(m),
            Err(e) => return fail(e),
        },
        None => None,
    };
    let opts = FitOptions {
        max_outer_iterations: args.max_iter,
        rel_loglik_tol: args.tol,
        ..FitOptions::default()
    };
    let model = match zipfa_fit(&a, args.rank, &opts, mask.as_ref()) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    if let Some(path) = &args.output {
        if let Err(e) = save_model(&model, path) {
            return fail(e);
        }
    }
    println!(
        "rank={} tau={} loglik={} iterations={} converged={}",
        model.rank,
        model.tau,
        model.loglik(),
        model.iterations,
        model.converged
    );
    if model.converged {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "did not converge within {} outer iterations (model written, flagged)",
            args.max_iter
        );
        ExitCode::from(3)
    }
}

fn parse_rank_range(spec: &str) -> Result<Vec<usize>, String> {
    let parse_one = |s: &str| -> Result<usize, String> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("invalid rank '{s}'"))
    };
    let (lo, hi) = match spec.split_once(':') {
        Some((a, b)) => (parse_one(a)?, parse_one(b)?),
        None => {
            let k = parse_one(spec)?;
            (k, k)
        }
    };
    if lo == 0 || hi < lo {
        return Err(format!("invalid rank range '{spec}' (need 1 <= a <= b)"));
    }
    Ok((lo..=hi).collect())
}

fn cmd_cv(args: &CvArgs) -> ExitCode {
    let a = match load_counts(&args.input) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let ranks = match parse_rank_range(&args.ranks) {
        Ok(r) => r,
        Err(msg) => return usage_fail(&msg),
    };
    if args.repeats == 0 {
        return usage_fail("--repeats must be at least 1");
    }
    let fit = FitOptions {
        max_outer_iterations: args.max_iter,
        rel_loglik_tol: args.tol,
        ..FitOptions::default()
    };
    let mut results: Vec<CvResult> = Vec::with_capacity(args.repeats);
    for rep in 0..args.repeats {
        let seed = if args.repeats == 1 {
            args.seed
        } else {
            derive_seed(args.seed, "cv-repeat", rep as u64)
        };
        let mut config = match CvConfig::new(ranks.clone(), args.folds, seed) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        config.fit = fit.clone();
        match select_rank(&a, &config) {
            Ok(r) => results.push(r),
            Err(e) => return fail(e),
        }
    }
    if let Some(path) = &args.output {
        if let Err(e) = std::fs::write(path, write_cv_csv(&results)) {
            return fail(e.into());
        }
    }
    match select_across_repeats(&results) {
        Ok(rank) => {
            println!("{rank}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

#[derive(Serialize)]
struct SimulationManifest {
    setting: String,
    seed: u64,
    n: usize,
    m: usize,
    target_zero_fraction: Option<f64>,
    tau: Option<f64>,
    realized_zero_fraction: f64,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Input(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> ExitCode {
    let setting: Setting = match args.setting.parse() {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if !(0.0..1.0).contains(&args.zero_pct) {
        return usage_fail(&format!(
            "--zero-pct must be in [0, 1), got {}",
            args.zero_pct
        ));
    }
    let mut spec = SimulationSpec::by_zero_fraction(setting, args.zero_pct, args.seed)
        .with_dims(args.n, args.m);
    spec.tau = args.tau;
    let data = match generate_counts(&spec) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let dir = &args.output;
    if let Err(e) = save_dataset(&data, dir) {
        return fail(e);
    }
    let tau = (!data.tau.is_nan()).then_some(data.tau);
    let manifest = SimulationManifest {
        setting: setting.to_string(),
        seed: args.seed,
        n: args.n,
        m: args.m,
        target_zero_fraction: args.tau.is_none().then_some(args.zero_pct),
        tau,
        realized_zero_fraction: data.realized_zero_fraction(),
    };
    if let Err(e) = write_json(&manifest, &dir.join("manifest.json")) {
        return fail(e);
    }
    println!(
        "setting={} n={} m={} tau={} realized_zero_fraction={}",
        setting,
        args.n,
        args.m,
        tau.map_or("none".to_string(), |t| t.to_string()),
        data.realized_zero_fraction()
    );
    ExitCode::SUCCESS
}

fn parse_list<T, E: std::fmt::Display>(
    spec: &str,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Result<Vec<T>, String> {
    spec.split(',')
        .map(|s| parse(s.trim()).map_err(|e| e.to_string()))
        .collect()
}

fn cmd_benchmark(args: &BenchmarkArgs) -> ExitCode {
    let settings = match parse_list(&args.settings, str::parse::<Setting>) {
        Ok(s) => s,
        Err(msg) => return usage_fail(&msg),
    };
    let fractions = match parse_list(&args.zero_pcts, |s| {
        s.parse::<f64>()
            .map_err(|_| format!("invalid zero fraction '{s}'"))
            .and_then(|f| {
                if (0.0..1.0).contains(&f) {
                    Ok(f)
                } else {
                    Err(format!("zero fraction {f} outside [0, 1)"))
                }
            })
    }) {
        Ok(f) => f,
        Err(msg) => return usage_fail(&msg),
    };
    let methods = match parse_list(&args.methods, str::parse::<Method>) {
        Ok(m) => m,
        Err(msg) => return usage_fail(&msg),
    };
    let opts = FitOptions {
        max_outer_iterations: args.max_iter,
        ..FitOptions::default()
    };
    let records = run_benchmark(
        &settings,
        &fractions,
        args.replicates,
        &methods,
        args.seed,
        &opts,
    );
    if let Err(e) = std::fs::write(&args.output, write_benchmark_csv(&records)) {
        return fail(e.into());
    }
    let failures = records.iter().filter(|r| r.l2_loss.is_nan()).count();
    eprintln!(
        "wrote {} records ({} failed fits) to {}",
        records.len(),
        failures,
        args.output.display()
    );
    ExitCode::SUCCESS
}

fn cmd_diagnose(args: &DiagnoseArgs) -> ExitCode {
    let a = match load_counts(&args.input) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let report = zero_pattern_diagnostic(&a);
    let mut out = String::from("taxon_id,zero_fraction,mean_log_nonzero,flagged\n");
    for t in &report.taxa {
        writeln!(
            out,
            "{},{},{},{}",
            t.taxon_id,
            t.zero_fraction,
            t.mean_log_nonzero
                .map_or(String::new(), |v| v.to_string()),
            t.flagged
        )
        .expect("string write");
    }
    for (name, fit) in [
        ("fit_flagged", &report.fit_flagged),
        ("fit_all", &report.fit_all),
    ] {
        match fit {
            Some(curve) => writeln!(
                out,
                "# {name}: intercept={} slope={}",
                curve.intercept, curve.slope
            )
            .expect("string write"),
            None => writeln!(out, "# {name}: skipped (fewer than 3 points)")
                .expect("string write"),
        }
    }
    if let Err(e) = std::fs::write(&args.output, out) {
        return fail(e.into());
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    }
}
