//! Analytic Gaussian mechanism calibration, accuracy-to-budget translation
//! and the additive (correlated) Gaussian release.
//!
//! `delta_at` evaluates the exact privacy profile of a Gaussian mechanism:
//!
//! ```text
//! delta(eps, sigma) = Phi(D/(2 sigma) - eps sigma/D) - e^eps Phi(-D/(2 sigma) - eps sigma/D)
//! ```
//!
//! The normal CDF goes through `erfc`, so the profile is accurate to roughly
//! 1e-15 in absolute terms, so deltas below [`MIN_DELTA`] are rejected rather
//! than silently weakened. The second term is evaluated in log space so
//! very large epsilons do not overflow `e^eps`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::AnalystId;

/// Smallest delta the calibration will honour.
pub const MIN_DELTA: f64 = 1e-12;

/// Lower end of the epsilon search used by the translation.
pub const MIN_EPSILON: f64 = 1e-6;

const SIGMA_REL_TOL: f64 = 1e-14;
const MAX_BISECTIONS: usize = 400;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `ln Phi(x)`, finite far into the lower tail.
fn log_normal_cdf(x: f64) -> f64 {
    if x > -37.0 {
        return normal_cdf(x).ln();
    }
    // Asymptotic expansion of the Mills ratio.
    let z = 1.0 / (x * x);
    let series = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
    -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(name));
    }
    if v <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<f64> {
    if !delta.is_finite() {
        return Err(Error::NonFinite("delta"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    if delta < MIN_DELTA {
        return Err(Error::InvalidParameter(format!(
            "delta {delta:e} is below the calibration floor {MIN_DELTA:e}"
        )));
    }
    Ok(delta)
}

/// Smallest delta for which Gaussian noise of standard deviation `sigma` is
/// (epsilon, delta)-DP on a query of L2 sensitivity `sensitivity`.
pub fn delta_at(epsilon: f64, sigma: f64, sensitivity: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    check_positive("sigma", sigma)?;
    check_positive("sensitivity", sensitivity)?;
    let half = sensitivity / (2.0 * sigma);
    let shift = epsilon * sigma / sensitivity;
    let first = normal_cdf(half - shift);
    let second = (epsilon + log_normal_cdf(-half - shift)).exp();
    Ok((first - second).clamp(0.0, 1.0))
}

/// Classical Gaussian-mechanism bound `D sqrt(2 ln(1.25/delta)) / eps`.
pub fn classical_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> f64 {
    sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon
}

/// Smallest noise scale meeting (epsilon, delta) for the given sensitivity,
/// found by bisection on the exact privacy profile. The returned value always
/// satisfies `delta_at(epsilon, sigma, sensitivity) <= delta`.
pub fn sigma_for(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    check_positive("sensitivity", sensitivity)?;
    let delta = check_delta(delta)?;
    let no_bracket = || Error::NoBracket {
        epsilon,
        delta,
        sensitivity,
    };

    let mut hi = 2.0 * classical_sigma(epsilon, delta, sensitivity);
    let mut grow = 0;
    while delta_at(epsilon, hi, sensitivity)? > delta {
        hi *= 2.0;
        grow += 1;
        if grow > 64 || !hi.is_finite() {
            return Err(no_bracket());
        }
    }
    // Large epsilons need less noise than the nominal D/10 floor.
    let mut lo = (sensitivity / 10.0).min(hi / 2.0);
    let mut shrink = 0;
    while delta_at(epsilon, lo, sensitivity)? <= delta {
        hi = lo;
        lo /= 2.0;
        shrink += 1;
        if shrink > 1100 || lo <= f64::MIN_POSITIVE {
            return Err(no_bracket());
        }
    }

    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= SIGMA_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_at(epsilon, mid, sensitivity)? <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// A fully calibrated Gaussian mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianCalibration {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    pub sigma: f64,
}

impl GaussianCalibration {
    pub fn calibrate(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        let sigma = sigma_for(epsilon, delta, sensitivity)?;
        Ok(Self {
            epsilon,
            delta,
            sensitivity,
            sigma,
        })
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Smallest epsilon in `(0, upper]` (to within `precision`) whose calibrated
/// noise variance does not exceed `target_variance`.
///
/// Bisection keeps an invalid lower end and a valid upper end and stops once
/// they are within `precision`; the valid end is returned, so the accuracy
/// target is always met and the result overshoots the true minimum by at
/// most `precision`.
pub fn translate_vanilla(
    sensitivity: f64,
    target_variance: f64,
    delta: f64,
    precision: f64,
    upper: f64,
) -> Result<f64> {
    check_positive("sensitivity", sensitivity)?;
    check_positive("precision", precision)?;
    check_positive("upper bound", upper)?;
    if target_variance.is_nan() || target_variance <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "target variance must be positive, got {target_variance}"
        )));
    }
    if upper <= MIN_EPSILON {
        return Err(Error::InvalidParameter(format!(
            "upper bound {upper} is below the search floor {MIN_EPSILON}"
        )));
    }
    let variance = |eps: f64| -> Result<f64> {
        let s = sigma_for(eps, delta, sensitivity)?;
        Ok(s * s)
    };

    let best = variance(upper)?;
    if best > target_variance {
        return Err(Error::InfeasibleTarget {
            target: target_variance,
            upper,
            best,
        });
    }
    let mut lo = MIN_EPSILON;
    if variance(lo)? <= target_variance {
        return Ok(lo);
    }
    let mut hi = upper;
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if variance(mid)? <= target_variance {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Which part of an additive release a noise draw belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseStage {
    /// The single draw on top of the true answer.
    Base,
    /// Extra noise layered on a previous release.
    Increment,
}

/// Supplier of zero-mean Gaussian draws.
pub trait NoiseSource {
    fn gaussian(&mut self, std_dev: f64, stage: NoiseStage) -> f64;
}

/// Adapts any `rand` generator into a [`NoiseSource`].
pub struct RngNoise<'a, R: ?Sized>(pub &'a mut R);

impl<R: Rng + ?Sized> NoiseSource for RngNoise<'_, R> {
    fn gaussian(&mut self, std_dev: f64, _stage: NoiseStage) -> f64 {
        if std_dev == 0.0 {
            return 0.0;
        }
        let z: f64 = self.0.sample(StandardNormal);
        std_dev * z
    }
}

/// Adds iid `N(0, variance)` noise to every coordinate.
pub fn perturb<N: NoiseSource + ?Sized>(
    values: &mut [f64],
    variance: f64,
    stage: NoiseStage,
    noise: &mut N,
) {
    let sd = variance.max(0.0).sqrt();
    for v in values {
        *v += noise.gaussian(sd, stage);
    }
}

/// One analyst's share of an additive Gaussian release.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveRelease {
    pub epsilon: f64,
    pub sigma: f64,
    /// Variance added on top of the previous release in the chain.
    pub increment_variance: f64,
    pub values: Vec<f64>,
}

/// Releases `true_answer` to several analysts with correlated noise.
///
/// Budgets are ordered by ascending calibrated sigma. The least noisy
/// analyst gets `true + N(0, s1^2)`; each following analyst gets the
/// previous release plus `N(0, sj^2 - s_prev^2)`, so every marginal is
/// exactly `N(0, sj^2)` while the data is touched once.
pub fn additive_gm<R: Rng + ?Sized>(
    true_answer: &[f64],
    budgets: &[(AnalystId, f64)],
    delta: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<BTreeMap<AnalystId, AdditiveRelease>> {
    additive_gm_with(true_answer, budgets, delta, sensitivity, &mut RngNoise(rng))
}

pub fn additive_gm_with<N: NoiseSource + ?Sized>(
    true_answer: &[f64],
    budgets: &[(AnalystId, f64)],
    delta: f64,
    sensitivity: f64,
    noise: &mut N,
) -> Result<BTreeMap<AnalystId, AdditiveRelease>> {
    if budgets.is_empty() {
        return Err(Error::InvalidParameter(
            "additive release needs at least one budget".into(),
        ));
    }
    let mut calibrated = Vec::with_capacity(budgets.len());
    let mut seen = std::collections::BTreeSet::new();
    for (id, eps) in budgets {
        if !seen.insert(id) {
            return Err(Error::DuplicateAnalyst(id.clone()));
        }
        check_positive("epsilon", *eps)?;
        calibrated.push((id, *eps, sigma_for(*eps, delta, sensitivity)?));
    }
    calibrated.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(b.0)));

    let mut out = BTreeMap::new();
    let mut current = true_answer.to_vec();
    let mut prev_var = 0.0;
    for (i, (id, eps, sigma)) in calibrated.into_iter().enumerate() {
        let var = sigma * sigma;
        let inc = (var - prev_var).max(0.0);
        let stage = if i == 0 {
            NoiseStage::Base
        } else {
            NoiseStage::Increment
        };
        perturb(&mut current, inc, stage, noise);
        out.insert(
            id.clone(),
            AdditiveRelease {
                epsilon: eps,
                sigma,
                increment_variance: inc,
                values: current.clone(),
            },
        );
        prev_var = var;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn huge_sigma_gives_negligible_delta() {
        assert!(delta_at(1.0, 1e6, 1.0).unwrap() < 1e-6);
    }

    #[test]
    fn delta_decreases_in_sigma() {
        for eps in [0.1, 1.0, 5.0] {
            let mut last = f64::INFINITY;
            for k in 1..200 {
                let sigma = 0.05 * k as f64;
                let d = delta_at(eps, sigma, 1.0).unwrap();
                assert!(d <= last, "eps={eps} sigma={sigma}");
                last = d;
            }
        }
    }

    #[test]
    fn delta_fixed_point_with_sigma_for() {
        let delta = 1e-6;
        let sigma = sigma_for(1.0, delta, 1.0).unwrap();
        let d = delta_at(1.0, sigma, 1.0).unwrap();
        assert!(d <= delta);
        assert!(d >= delta * (1.0 - 1e-9), "d={d:e}");
    }

    #[test]
    fn delta_at_rejects_bad_input() {
        assert!(matches!(
            delta_at(f64::NAN, 1.0, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            delta_at(1.0, f64::INFINITY, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(delta_at(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn log_cdf_matches_direct_evaluation_at_switch() {
        let direct = normal_cdf(-36.9).ln();
        let asym = {
            let x: f64 = -36.9;
            let z = 1.0 / (x * x);
            let series =
                1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z * (1.0 - 9.0 * z))));
            -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
        };
        assert!((direct - asym).abs() < 1e-9 * direct.abs());
        assert!(log_normal_cdf(-200.0).is_finite());
    }

    #[test]
    fn sigma_for_below_classical_bound() {
        let s = sigma_for(1.0, 1e-6, 1.0).unwrap();
        let classical = (2.0 * (1.25e6f64).ln()).sqrt();
        assert!(s <= classical, "{s} > {classical}");
        assert!((classical - 5.30).abs() < 0.01);
        assert!(delta_at(1.0, s, 1.0).unwrap() <= 1e-6);
    }

    #[test]
    fn sigma_scales_with_sensitivity() {
        let a = sigma_for(0.7, 1e-9, 1.0).unwrap();
        let b = sigma_for(0.7, 1e-9, 2.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_decreases_in_epsilon() {
        let mut last = f64::INFINITY;
        for k in 1..60 {
            let s = sigma_for(0.1 * k as f64, 1e-9, 1.0).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn sigma_for_handles_extreme_epsilon() {
        let s = sigma_for(1000.0, 1e-9, 1.0).unwrap();
        assert!(s > 0.0 && s < 0.1);
        assert!(delta_at(1000.0, s, 1.0).unwrap() <= 1e-9);
        let s = sigma_for(1e-4, 1e-9, 1.0).unwrap();
        assert!(delta_at(1e-4, s, 1.0).unwrap() <= 1e-9);
    }

    #[test]
    fn tiny_delta_is_rejected() {
        assert!(sigma_for(1.0, 1e-15, 1.0).is_err());
        assert!(sigma_for(1.0, MIN_DELTA, 1.0).is_ok());
        assert!(sigma_for(1.0, 0.0, 1.0).is_err());
        assert!(sigma_for(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn translate_round_trips_through_sigma_for() {
        let delta = 1e-9;
        let p = 1e-3;
        let s = sigma_for(1.0, delta, 1.0).unwrap();
        let eps = translate_vanilla(1.0, s * s, delta, p, 10.0).unwrap();
        assert!((1.0..=1.0 + p).contains(&eps), "eps={eps}");
    }

    #[test]
    fn translate_loose_target_hits_floor() {
        let eps = translate_vanilla(1.0, 1e30, 1e-9, 1e-3, 6.4).unwrap();
        assert!(eps <= MIN_EPSILON + 1e-3);
    }

    #[test]
    fn translate_monotone_in_target() {
        let mut v = 400.0;
        let mut last = 0.0;
        for _ in 0..8 {
            let eps = translate_vanilla(1.0, v, 1e-9, 1e-4, 50.0).unwrap();
            assert!(eps > last);
            last = eps;
            v /= 2.0;
        }
    }

    #[test]
    fn translate_reports_infeasible() {
        let err = translate_vanilla(1.0, 1e-4, 1e-9, 1e-3, 1.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTarget { .. }));
    }

    #[test]
    fn additive_equal_budgets_share_output() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let out = additive_gm(
            &[10.0, 20.0],
            &[("a".into(), 0.5), ("b".into(), 0.5)],
            1e-9,
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(
            out[&AnalystId::from("a")].values,
            out[&AnalystId::from("b")].values
        );
    }

    #[test]
    fn additive_single_analyst_is_plain_gaussian() {
        let mut r1 = ChaCha20Rng::seed_from_u64(9);
        let mut r2 = ChaCha20Rng::seed_from_u64(9);
        let out = additive_gm(&[3.0, 4.0, 5.0], &[("a".into(), 0.8)], 1e-9, 1.0, &mut r1).unwrap();
        let sigma = sigma_for(0.8, 1e-9, 1.0).unwrap();
        let mut plain = vec![3.0, 4.0, 5.0];
        perturb(
            &mut plain,
            sigma * sigma,
            NoiseStage::Base,
            &mut RngNoise(&mut r2),
        );
        assert_eq!(out[&AnalystId::from("a")].values, plain);
    }

    #[test]
    fn additive_rejects_duplicates_and_nonpositive() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(matches!(
            additive_gm(
                &[0.0],
                &[("a".into(), 0.5), ("a".into(), 0.2)],
                1e-9,
                1.0,
                &mut rng
            ),
            Err(Error::DuplicateAnalyst(_))
        ));
        assert!(additive_gm(&[0.0], &[("a".into(), 0.0)], 1e-9, 1.0, &mut rng).is_err());
        assert!(additive_gm(&[0.0], &[], 1e-9, 1.0, &mut rng).is_err());
    }

    #[test]
    fn additive_variances_telescope() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let budgets: Vec<(AnalystId, f64)> = [0.3, 2.0, 0.9, 0.05, 1.1]
            .iter()
            .enumerate()
            .map(|(i, &e)| (AnalystId::new(format!("a{i}")), e))
            .collect();
        let out = additive_gm(&[0.0], &budgets, 1e-9, 1.0, &mut rng).unwrap();
        let mut rel: Vec<&AdditiveRelease> = out.values().collect();
        rel.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
        let mut acc = 0.0;
        for r in rel {
            acc += r.increment_variance;
            assert!((acc - r.sigma * r.sigma).abs() <= 1e-12 * acc);
        }
    }

    struct NoIncrements<R>(R);

    impl<R: Rng> NoiseSource for NoIncrements<R> {
        fn gaussian(&mut self, std_dev: f64, stage: NoiseStage) -> f64 {
            match stage {
                NoiseStage::Base => RngNoise(&mut self.0).gaussian(std_dev, stage),
                NoiseStage::Increment => 0.0,
            }
        }
    }

    #[test]
    fn additive_draws_base_once_then_increments() {
        let mut noise = NoIncrements(ChaCha20Rng::seed_from_u64(5));
        let budgets = [("hi".into(), 2.0), ("mid".into(), 1.0), ("lo".into(), 0.1)];
        let out = additive_gm_with(&[1.0, 2.0, 3.0], &budgets, 1e-9, 1.0, &mut noise).unwrap();
        let top = &out[&AnalystId::from("hi")].values;
        assert_ne!(top, &vec![1.0, 2.0, 3.0]);
        for r in out.values() {
            assert_eq!(&r.values, top);
        }
    }
}
