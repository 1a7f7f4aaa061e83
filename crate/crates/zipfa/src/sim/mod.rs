//! Synthetic benchmark data, evaluation metrics, the log-SVD baseline, and
//! the zero-pattern diagnostic.

mod baseline;
mod benchmark;
mod diagnostic;
mod generate;
mod persist;
mod settings;
mod truth;

pub use baseline::{log_svd_baseline, log_transform, row_center};
pub use benchmark::{
    l2_loss, l2_loss_centered, run_benchmark, write_benchmark_csv, BenchmarkRecord, Method, BENCHMARK_CSV_HEADER,
    TRUE_RANK,
};
pub use diagnostic::{zero_pattern_diagnostic, LogisticCurve, TaxonDiagnostic, ZeroPatternReport};
pub use generate::{generate_counts, SimulatedDataset, SimulationSpec};
pub use persist::{load_truth, save_dataset, TruthDocument};
pub use settings::{calibrate_tau, zero_probability_matrix, CALIBRATION_TOL};
pub use truth::generate_truth;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Zero-generation mechanism of a simulated dataset.
///
/// Settings 1-4 link the structural-zero probability to the Poisson rate
/// through different monotone transforms; setting 5 draws one fixed zero
/// probability per taxon; settings 6.1/6.2 use negative-binomial counts with
/// a positive zero-rate link and low/high over-dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6_1,
    S6_2,
}

impl Setting {
    pub const ALL: [Setting; 7] = [
        Setting::S1,
        Setting::S2,
        Setting::S3,
        Setting::S4,
        Setting::S5,
        Setting::S6_1,
        Setting::S6_2,
    ];

    /// Settings 6.x draw counts from a gamma-Poisson (negative binomial)
    /// mixture instead of a plain Poisson.
    pub fn over_dispersed(self) -> bool {
        matches!(self, Setting::S6_1 | Setting::S6_2)
    }

    /// Per-taxon dispersion range for the 6.x settings.
    pub fn dispersion_range(self) -> Option<(f64, f64)> {
        match self {
            Setting::S6_1 => Some((0.5, 1.0)),
            Setting::S6_2 => Some((1.0, 3.0)),
            _ => None,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::S1 => "1",
            Setting::S2 => "2",
            Setting::S3 => "3",
            Setting::S4 => "4",
            Setting::S5 => "5",
            Setting::S6_1 => "6.1",
            Setting::S6_2 => "6.2",
        };
        f.write_str(s)
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "1" => Ok(Setting::S1),
            "2" => Ok(Setting::S2),
            "3" => Ok(Setting::S3),
            "4" => Ok(Setting::S4),
            "5" => Ok(Setting::S5),
            "6.1" => Ok(Setting::S6_1),
            "6.2" => Ok(Setting::S6_2),
            other => Err(Error::Argument(format!(
                "unknown setting '{other}' (expected 1, 2, 3, 4, 5, 6.1 or 6.2)"
            ))),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splittable seed derivation: mixes `(root, label, index)` so that adding
/// replicates or new labels never reshuffles existing streams.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(root);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}
