//! Structural-zero probability maps for each simulation setting and the
//! bisection that calibrates the shape parameter to a target zero fraction.

use ndarray::Array2;
use rand::Rng;

use super::Setting;
use crate::error::{Error, Result};
use crate::num::sigmoid;

/// Calibration stops when `|mean(P) - target| < CALIBRATION_TOL`.
pub const CALIBRATION_TOL: f64 = 0.005;

fn check_domain(setting: Setting, tau: f64) -> Result<()> {
    if !tau.is_finite() {
        return Err(Error::Argument(format!("tau must be finite, got {tau}")));
    }
    match setting {
        Setting::S4 | Setting::S6_1 | Setting::S6_2 if tau < 0.0 => Err(Error::Argument(format!(
            "setting {setting} needs tau >= 0, got {tau}"
        ))),
        Setting::S5 if !(0.10..=0.90).contains(&tau) => Err(Error::Argument(format!(
            "setting 5 needs tau in [0.10, 0.90] so that tau +/- 0.10 stays a probability, got {tau}"
        ))),
        _ => Ok(()),
    }
}

/// Elementwise structural-zero probabilities for a log-rate matrix `Lambda`.
///
/// Settings 1-4 and 6.x are deterministic transforms of `tau * Lambda`;
/// setting 5 draws one probability per column from `Unif(tau-0.1, tau+0.1)`.
pub fn zero_probability_matrix<R: Rng>(
    lambda: &Array2<f64>,
    setting: Setting,
    tau: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_domain(setting, tau)?;
    let (n, m) = lambda.dim();
    let p = match setting {
        // logit(p) = -tau ln(lambda)
        Setting::S1 => lambda.mapv(|l| sigmoid(-tau * l)),
        // p = exp(-lambda^tau)
        Setting::S2 => lambda.mapv(|l| (-(tau * l).exp()).exp()),
        // p = 1 - exp(-lambda^{-tau})
        Setting::S3 => lambda.mapv(|l| -(-(-tau * l).exp()).exp_m1()),
        // p = exp(-tau lambda)
        Setting::S4 => lambda.mapv(|l| (-tau * l.exp()).exp()),
        // column-constant p_j ~ Unif(tau - 0.1, tau + 0.1)
        Setting::S5 => {
            let cols: Vec<f64> = (0..m)
                .map(|_| rng.random_range(tau - 0.10..tau + 0.10))
                .collect();
            Array2::from_shape_fn((n, m), |(_, j)| cols[j])
        }
        // ln(-ln p) = -ln(lambda) + ln(tau), i.e. p = exp(-tau / lambda)
        Setting::S6_1 | Setting::S6_2 => lambda.mapv(|l| (-tau * (-l).exp()).exp()),
    };
    debug_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    Ok(p)
}

fn mean_probability(lambda: &Array2<f64>, setting: Setting, tau: f64) -> Result<f64> {
    // Settings other than 5 are deterministic; a throwaway rng is never used.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let p = zero_probability_matrix(lambda, setting, tau, &mut rng)?;
    Ok(p.iter().sum::<f64>() / p.len() as f64)
}

/// Finds `tau` such that the mean structural-zero probability hits the
/// target within [`CALIBRATION_TOL`]. The mean is monotone decreasing in
/// `tau` for every setting except 5, where the uniform mean is `tau` itself.
pub fn calibrate_tau(setting: Setting, lambda: &Array2<f64>, target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::Calibration(format!(
            "target zero fraction must be in [0, 1), got {target}"
        )));
    }
    if setting == Setting::S5 {
        check_domain(setting, target).map_err(|_| {
            Error::Calibration(format!(
                "setting 5 can only reach zero fractions in [0.10, 0.90], got {target}"
            ))
        })?;
        return Ok(target);
    }

    let (mut lo, mut hi) = match setting {
        // tau >= 0 settings: mean(P) = 1 at tau = 0.
        Setting::S4 | Setting::S6_1 | Setting::S6_2 => (0.0_f64, 1.0_f64),
        _ => (-1.0_f64, 1.0_f64),
    };
    // Expand until the target is bracketed: mean(lo) >= target >= mean(hi).
    let mut mean_lo = mean_probability(lambda, setting, lo)?;
    let mut mean_hi = mean_probability(lambda, setting, hi)?;
    for _ in 0..60 {
        if mean_lo >= target {
            break;
        }
        lo = if lo <= 0.0 { lo * 2.0 - 1.0 } else { lo / 2.0 };
        if matches!(setting, Setting::S4 | Setting::S6_1 | Setting::S6_2) {
            lo = lo.max(0.0);
        }
        mean_lo = mean_probability(lambda, setting, lo)?;
        if lo == 0.0 {
            break;
        }
    }
    for _ in 0..60 {
        if mean_hi <= target {
            break;
        }
        hi = hi * 2.0 + 1.0;
        mean_hi = mean_probability(lambda, setting, hi)?;
    }
    if mean_lo < target - CALIBRATION_TOL || mean_hi > target + CALIBRATION_TOL {
        return Err(Error::Calibration(format!(
            "target {target} unattainable for setting {setting}: mean zero fraction ranges \
             over [{mean_hi:.4}, {mean_lo:.4}] for tau in [{lo:.3}, {hi:.3}]"
        )));
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let mean_mid = mean_probability(lambda, setting, mid)?;
        if (mean_mid - target).abs() < CALIBRATION_TOL {
            return Ok(mid);
        }
        if mean_mid > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration(format!(
        "bisection failed to reach the target {target} for setting {setting}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn setting1_at_unit_rate_is_one_half() {
        // lambda = 1 means Lambda = 0, so p = 1/(1+1) for any tau.
        let lambda = Array2::zeros((2, 2));
        for tau in [-3.0, 0.0, 0.4, 10.0] {
            let p = zero_probability_matrix(&lambda, Setting::S1, tau, &mut rng()).unwrap();
            assert!(p.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn setting2_matches_direct_evaluation() {
        // lambda = 1, tau = 1: p = e^{-1}
        let lambda = Array2::zeros((2, 2));
        let p = zero_probability_matrix(&lambda, Setting::S2, 1.0, &mut rng()).unwrap();
        assert_abs_diff_eq!(p[[0, 0]], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn setting4_with_zero_tau_is_certain_zero() {
        let lambda = array![[0.3, 1.2], [2.0, -0.5]];
        let p = zero_probability_matrix(&lambda, Setting::S4, 0.0, &mut rng()).unwrap();
        assert!(p.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn setting5_is_column_constant() {
        let lambda = Array2::zeros((5, 4));
        let p = zero_probability_matrix(&lambda, Setting::S5, 0.4, &mut rng()).unwrap();
        for j in 0..4 {
            let first = p[[0, j]];
            assert!((0.3..0.5).contains(&first));
            for i in 1..5 {
                assert_eq!(p[[i, j]], first);
            }
        }
        assert!(zero_probability_matrix(&lambda, Setting::S5, 0.95, &mut rng()).is_err());
    }

    #[test]
    fn setting6_matches_closed_form() {
        let lambda = array![[1.0, 2.0]];
        let p = zero_probability_matrix(&lambda, Setting::S6_1, 0.7, &mut rng()).unwrap();
        for (idx, &l) in lambda.iter().enumerate() {
            let expected = (-0.7 / f64::exp(l)).exp();
            assert_abs_diff_eq!(p.as_slice().unwrap()[idx], expected, epsilon = 1e-12);
        }
        assert!(zero_probability_matrix(&lambda, Setting::S6_1, -0.1, &mut rng()).is_err());
    }

    #[test]
    fn probabilities_stay_in_range_and_s1_decreases_in_lambda() {
        let lambda = array![[-2.0, -0.5, 0.0, 0.5, 2.0, 5.0]];
        for setting in [Setting::S1, Setting::S2, Setting::S3] {
            for tau in [-2.0, 0.3, 4.0] {
                let p = zero_probability_matrix(&lambda, setting, tau, &mut rng()).unwrap();
                assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
        let p = zero_probability_matrix(&lambda, Setting::S1, 1.5, &mut rng()).unwrap();
        let row = p.row(0);
        for w in row.as_slice().unwrap().windows(2) {
            assert!(w[0] > w[1], "S1 must decrease in lambda for tau > 0");
        }
    }

    #[test]
    fn calibrate_setting5_returns_target() {
        let lambda = Array2::zeros((3, 3));
        assert_eq!(calibrate_tau(Setting::S5, &lambda, 0.40).unwrap(), 0.40);
        assert!(calibrate_tau(Setting::S5, &lambda, 0.95).is_err());
    }

    #[test]
    fn calibrate_detects_the_fixed_point_of_setting1() {
        // Lambda = 0 pins mean(P) at 1/2 for every tau.
        let lambda = Array2::zeros((4, 4));
        assert!(calibrate_tau(Setting::S1, &lambda, 0.20).is_err());
        let tau = calibrate_tau(Setting::S1, &lambda, 0.50).unwrap();
        let mean = mean_probability(&lambda, Setting::S1, tau).unwrap();
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn calibrated_tau_meets_the_target_on_truth_lambda() {
        let mut r = ChaCha8Rng::seed_from_u64(77);
        let (u, v, _, _) = super::super::generate_truth(200, 100, &mut r);
        let lambda = u.dot(&v.t());
        for setting in Setting::ALL {
            for target in [0.2, 0.4] {
                let tau = calibrate_tau(setting, &lambda, target).unwrap();
                if setting == Setting::S5 {
                    assert_eq!(tau, target);
                    continue;
                }
                let mean = mean_probability(&lambda, setting, tau).unwrap();
                assert!(
                    (mean - target).abs() < CALIBRATION_TOL,
                    "setting {setting} target {target}: mean {mean}"
                );
            }
        }
    }
}
