//! Per-taxon zero-percentage vs mean-log-count diagnostic with fitted
//! logistic curves.

use crate::data::CountMatrix;
use crate::num::sigmoid;

/// Threshold above which a taxon's mean log nonzero count makes its observed
/// zero share a good proxy for the structural-zero probability.
pub const MEAN_LOG_FLAG_THRESHOLD: f64 = 2.5;

#[derive(Debug, Clone)]
pub struct TaxonDiagnostic {
    pub taxon_id: String,
    /// Share of samples with a zero count for this taxon.
    pub zero_fraction: f64,
    /// Mean of `ln(count)` over nonzero counts; `None` when all are zero.
    pub mean_log_nonzero: Option<f64>,
    pub flagged: bool,
}

/// Two-parameter curve `zero_fraction ~ logistic(intercept + slope * x)`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticCurve {
    pub intercept: f64,
    pub slope: f64,
}

impl LogisticCurve {
    pub fn predict(&self, x: f64) -> f64 {
        sigmoid(self.intercept + self.slope * x)
    }
}

#[derive(Debug, Clone)]
pub struct ZeroPatternReport {
    pub taxa: Vec<TaxonDiagnostic>,
    /// Curve fitted to flagged taxa only; `None` with fewer than 3 points.
    pub fit_flagged: Option<LogisticCurve>,
    /// Curve fitted to all taxa with a defined mean log count.
    pub fit_all: Option<LogisticCurve>,
}

/// Least squares on the probability scale via damped Gauss-Newton, seeded by
/// a linear fit on the logit scale.
fn fit_logistic_curve(points: &[(f64, f64)]) -> Option<LogisticCurve> {
    if points.len() < 3 {
        return None;
    }
    // Seed: linear least squares of logit(y) on x, with y clamped away from
    // the boundary.
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let n = points.len() as f64;
    for &(x, y) in points {
        let yc = y.clamp(1e-6, 1.0 - 1e-6);
        let t = (yc / (1.0 - yc)).ln();
        sx += x;
        sy += t;
        sxx += x * x;
        sxy += x * t;
    }
    let det = n * sxx - sx * sx;
    let (mut a, mut b) = if det.abs() > 1e-12 {
        (
            (sy * sxx - sx * sxy) / det,
            (n * sxy - sx * sy) / det,
        )
    } else {
        (sy / n, 0.0)
    };

    let sse = |a: f64, b: f64| -> f64 {
        points
            .iter()
            .map(|&(x, y)| {
                let r = y - sigmoid(a + b * x);
                r * r
            })
            .sum()
    };
    let mut best = sse(a, b);
    let mut damping = 1e-6;
    for _ in 0..200 {
        // Gauss-Newton normal equations for residuals y - sigmoid(a + b x).
        let (mut g0, mut g1) = (0.0, 0.0);
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        for &(x, y) in points {
            let s = sigmoid(a + b * x);
            let w = s * (1.0 - s);
            let r = y - s;
            g0 += r * w;
            g1 += r * w * x;
            h00 += w * w;
            h01 += w * w * x;
            h11 += w * w * x * x;
        }
        let d = (h00 + damping) * (h11 + damping) - h01 * h01;
        if d.abs() < 1e-300 {
            break;
        }
        let da = (g0 * (h11 + damping) - h01 * g1) / d;
        let db = ((h00 + damping) * g1 - h01 * g0) / d;
        let trial = sse(a + da, b + db);
        if trial < best {
            a += da;
            b += db;
            let gained = best - trial;
            best = trial;
            damping = (damping / 3.0).max(1e-12);
            if gained < 1e-14 {
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
    }
    Some(LogisticCurve {
        intercept: a,
        slope: b,
    })
}

/// Per-taxon zero share and mean log nonzero count, plus logistic curves
/// fitted to the flagged taxa and to all taxa.
pub fn zero_pattern_diagnostic(a: &CountMatrix) -> ZeroPatternReport {
    let (n, m) = (a.n_samples(), a.n_taxa());
    let mut taxa = Vec::with_capacity(m);
    for j in 0..m {
        let mut zeros = 0usize;
        let mut log_sum = 0.0;
        let mut nonzero = 0usize;
        for i in 0..n {
            let v = a.values()[[i, j]];
            if v == 0 {
                zeros += 1;
            } else {
                log_sum += (v as f64).ln();
                nonzero += 1;
            }
        }
        let mean_log_nonzero = (nonzero > 0).then(|| log_sum / nonzero as f64);
        taxa.push(TaxonDiagnostic {
            taxon_id: a.taxon_ids()[j].clone(),
            zero_fraction: zeros as f64 / n as f64,
            mean_log_nonzero,
            flagged: mean_log_nonzero.is_some_and(|v| v > MEAN_LOG_FLAG_THRESHOLD),
        });
    }

    let all_points: Vec<(f64, f64)> = taxa
        .iter()
        .filter_map(|t| t.mean_log_nonzero.map(|x| (x, t.zero_fraction)))
        .collect();
    let flagged_points: Vec<(f64, f64)> = taxa
        .iter()
        .filter(|t| t.flagged)
        .filter_map(|t| t.mean_log_nonzero.map(|x| (x, t.zero_fraction)))
        .collect();

    ZeroPatternReport {
        taxa,
        fit_flagged: fit_logistic_curve(&flagged_points),
        fit_all: fit_logistic_curve(&all_points),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    #[test]
    fn per_taxon_summary_matches_direct_computation() {
        // Column 0: counts (0, 7, 55) -> zero share 1/3,
        // mean log = (ln 7 + ln 55)/2 ~ 2.977 > 2.5 -> flagged.
        let values = Array2::from_shape_vec((3, 2), vec![0, 1, 7, 1, 55, 1]).unwrap();
        let a = CountMatrix::from_values(values).unwrap();
        let report = zero_pattern_diagnostic(&a);
        let t = &report.taxa[0];
        assert_abs_diff_eq!(t.zero_fraction, 1.0 / 3.0, epsilon = 1e-15);
        let expected = (7.0f64.ln() + 55.0f64.ln()) / 2.0;
        assert_abs_diff_eq!(t.mean_log_nonzero.unwrap(), expected, epsilon = 1e-12);
        assert!(t.flagged);
        // Column 1 has no zeros and small counts.
        let t = &report.taxa[1];
        assert_eq!(t.zero_fraction, 0.0);
        assert!(!t.flagged);
    }

    #[test]
    fn all_zero_taxon_has_missing_mean_and_is_excluded_from_fits() {
        let values = Array2::from_shape_vec(
            (4, 3),
            vec![0, 3, 9, 0, 4, 28, 0, 0, 81, 0, 5, 250],
        )
        .unwrap();
        let a = CountMatrix::from_values(values).unwrap();
        let report = zero_pattern_diagnostic(&a);
        assert!(report.taxa[0].mean_log_nonzero.is_none());
        assert!(!report.taxa[0].flagged);
        assert_eq!(report.taxa[0].zero_fraction, 1.0);
        // Only two taxa carry a defined mean: not enough points for a fit.
        assert!(report.fit_all.is_none());
        assert!(report.fit_flagged.is_none());
    }

    #[test]
    fn logistic_fit_recovers_an_exact_curve() {
        let truth = LogisticCurve {
            intercept: 2.0,
            slope: -1.3,
        };
        let points: Vec<(f64, f64)> = (0..25)
            .map(|k| {
                let x = 0.2 * k as f64;
                (x, truth.predict(x))
            })
            .collect();
        let fit = fit_logistic_curve(&points).unwrap();
        assert_abs_diff_eq!(fit.intercept, truth.intercept, epsilon = 1e-5);
        assert_abs_diff_eq!(fit.slope, truth.slope, epsilon = 1e-5);
    }

    #[test]
    fn fit_skipped_below_three_points() {
        assert!(fit_logistic_curve(&[(0.0, 0.5), (1.0, 0.4)]).is_none());
    }

    #[test]
    fn negative_link_data_yields_negative_slope() {
        // Zero share decreasing in mean log count, with noise-free logistic
        // structure plus a mild perturbation.
        let points: Vec<(f64, f64)> = (0..40)
            .map(|k| {
                let x = 0.1 * k as f64;
                let y = sigmoid(1.5 - 0.9 * x) + 0.01 * ((k % 5) as f64 - 2.0) / 2.0;
                (x, y.clamp(0.0, 1.0))
            })
            .collect();
        let fit = fit_logistic_curve(&points).unwrap();
        assert!(fit.slope < 0.0, "slope {}", fit.slope);
    }
}
