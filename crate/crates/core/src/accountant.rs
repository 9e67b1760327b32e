//! Privacy-loss composition (basic, advanced k-fold, Rényi) and the
//! per-analyst ledger used for reporting.
//!
//! Constraint checks never go through this module; they use basic sums over
//! the provenance table. The ledger only reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gauss;
use crate::model::{AnalystId, PrivacyBudget};

pub const DEFAULT_RDP_ORDERS: [f64; 8] = [1.5, 2.0, 3.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// Delta slack allowed when the advanced bound trades delta for epsilon.
pub const DEFAULT_ADVANCED_DELTA: f64 = 1e-6;

pub fn compose_basic(charges: &[PrivacyBudget]) -> PrivacyBudget {
    charges
        .iter()
        .fold(PrivacyBudget::ZERO, |acc, c| PrivacyBudget {
            epsilon: acc.epsilon + c.epsilon,
            delta: acc.delta + c.delta,
        })
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn ln_binomial(k: u64, l: u64) -> f64 {
    ln_gamma(k as f64 + 1.0) - ln_gamma(l as f64 + 1.0) - ln_gamma((k - l) as f64 + 1.0)
}

/// Optimal k-fold composition of (epsilon, delta)-DP mechanisms, at the
/// trade-off point `i` in `0..=k/2`. Evaluated in log space.
pub fn compose_advanced(epsilon: f64, delta: f64, k: u64, i: u64) -> Result<PrivacyBudget> {
    if !(epsilon.is_finite() && epsilon >= 0.0) || !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "invalid per-mechanism budget ({epsilon}, {delta})"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if i > k / 2 {
        return Err(Error::InvalidParameter(format!(
            "i={i} exceeds floor(k/2)={}",
            k / 2
        )));
    }
    if k == 1 {
        return Ok(PrivacyBudget { epsilon, delta });
    }
    // softplus(eps) = ln(1 + e^eps)
    let softplus = epsilon + (-epsilon).exp().ln_1p();
    let log_terms: Vec<f64> = (0..i)
        .map(|l| {
            let gap = -(-2.0 * (i - l) as f64 * epsilon).exp_m1();
            ln_binomial(k, l) + (k - l) as f64 * epsilon - k as f64 * softplus + gap.ln()
        })
        .collect();
    let delta_i = log_sum_exp(&log_terms).exp();
    if !delta_i.is_finite() {
        return Err(Error::CompositionOverflow { k });
    }
    let eps_out = (k - 2 * i) as f64 * epsilon;
    let delta_out = -(k as f64 * (-delta).ln_1p() + (-delta_i.min(1.0)).ln_1p()).exp_m1();
    if !delta_out.is_finite() {
        return Err(Error::CompositionOverflow { k });
    }
    Ok(PrivacyBudget {
        epsilon: eps_out,
        delta: delta_out.clamp(0.0, 1.0),
    })
}

/// Smallest-epsilon advanced bound whose delta stays within `delta_budget`;
/// falls back to `i = 0` when nothing better qualifies.
pub fn best_advanced(epsilon: f64, delta: f64, k: u64, delta_budget: f64) -> Result<PrivacyBudget> {
    let base = compose_advanced(epsilon, delta, k, 0)?;
    if epsilon == 0.0 {
        return Ok(base);
    }
    // delta grows with i, so binary search the largest admissible i.
    let (mut lo, mut hi) = (0u64, k / 2);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if compose_advanced(epsilon, delta, k, mid)?.delta <= delta_budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    if lo == 0 {
        Ok(base)
    } else {
        compose_advanced(epsilon, delta, k, lo)
    }
}

/// Rényi-DP curve sampled on a grid of orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl RdpCurve {
    /// Gaussian mechanism: `eps(alpha) = alpha D^2 / (2 sigma^2)`.
    pub fn gaussian(orders: &[f64], sigma: f64, sensitivity: f64) -> Self {
        Self {
            orders: orders.to_vec(),
            epsilons: orders
                .iter()
                .map(|a| a * sensitivity * sensitivity / (2.0 * sigma * sigma))
                .collect(),
        }
    }

    /// Pure epsilon-DP implies (alpha, epsilon)-RDP at every order.
    pub fn pure(orders: &[f64], epsilon: f64) -> Self {
        Self {
            orders: orders.to_vec(),
            epsilons: vec![epsilon; orders.len()],
        }
    }
}

/// Sums RDP curves pointwise and converts to (epsilon, target_delta)-DP at
/// the best order of the grid.
pub fn compose_rdp_and_convert(curves: &[RdpCurve], target_delta: f64) -> Result<PrivacyBudget> {
    if !(target_delta > 0.0 && target_delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target delta must be in (0, 1), got {target_delta}"
        )));
    }
    let Some(first) = curves.first() else {
        return Ok(PrivacyBudget {
            epsilon: 0.0,
            delta: target_delta,
        });
    };
    let orders = &first.orders;
    if orders.is_empty() {
        return Err(Error::InvalidParameter("empty RDP order grid".into()));
    }
    if orders.iter().any(|&a| !(a > 1.0)) {
        return Err(Error::InvalidParameter("RDP orders must exceed 1".into()));
    }
    let mut total = vec![0.0; orders.len()];
    for c in curves {
        if &c.orders != orders || c.epsilons.len() != orders.len() {
            return Err(Error::InvalidParameter(
                "RDP curves must share one order grid".into(),
            ));
        }
        for (t, e) in total.iter_mut().zip(&c.epsilons) {
            *t += e;
        }
    }
    let log_inv_delta = (1.0 / target_delta).ln();
    let epsilon = orders
        .iter()
        .zip(&total)
        .map(|(a, e)| e + log_inv_delta / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    Ok(PrivacyBudget {
        epsilon,
        delta: target_delta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompositionMode {
    Basic,
    Advanced { delta_budget: f64 },
    Rdp { orders: Vec<f64>, target_delta: f64 },
}

impl CompositionMode {
    pub fn advanced() -> Self {
        Self::Advanced {
            delta_budget: DEFAULT_ADVANCED_DELTA,
        }
    }

    pub fn rdp() -> Self {
        Self::Rdp {
            orders: DEFAULT_RDP_ORDERS.to_vec(),
            target_delta: DEFAULT_ADVANCED_DELTA,
        }
    }

    pub fn compose(&self, charges: &[PrivacyBudget]) -> Result<PrivacyBudget> {
        let live: Vec<PrivacyBudget> = charges
            .iter()
            .copied()
            .filter(|c| c.epsilon > 0.0 || c.delta > 0.0)
            .collect();
        let basic = compose_basic(&live);
        match self {
            CompositionMode::Basic => Ok(basic),
            _ if live.is_empty() => Ok(basic),
            CompositionMode::Advanced { .. } if live.len() == 1 => Ok(basic),
            CompositionMode::Advanced { delta_budget } => {
                let eps = live.iter().map(|c| c.epsilon).fold(0.0, f64::max);
                let del = live.iter().map(|c| c.delta).fold(0.0, f64::max);
                match best_advanced(eps, del, live.len() as u64, *delta_budget) {
                    Ok(adv) if adv.epsilon < basic.epsilon => Ok(adv),
                    _ => Ok(basic),
                }
            }
            CompositionMode::Rdp {
                orders,
                target_delta,
            } => {
                let curves = live
                    .iter()
                    .map(|c| {
                        if c.delta > 0.0 && c.epsilon > 0.0 {
                            let s = gauss::sigma_for(c.epsilon, c.delta, 1.0)?;
                            Ok(RdpCurve::gaussian(orders, s, 1.0))
                        } else {
                            Ok(RdpCurve::pure(orders, c.epsilon))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                compose_rdp_and_convert(&curves, *target_delta)
            }
        }
    }
}

/// Per-analyst record of every charge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrivacyLedger {
    entries: BTreeMap<AnalystId, Vec<PrivacyBudget>>,
    mode: CompositionMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalystTotals {
    pub charges: usize,
    pub basic: PrivacyBudget,
    pub advanced: PrivacyBudget,
    pub rdp: PrivacyBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub mode: CompositionMode,
    pub analysts: BTreeMap<AnalystId, AnalystTotals>,
}

impl PrivacyLedger {
    pub fn new(mode: CompositionMode) -> Self {
        Self {
            entries: BTreeMap::new(),
            mode,
        }
    }

    pub fn mode(&self) -> &CompositionMode {
        &self.mode
    }

    pub fn register(&mut self, analyst: AnalystId) {
        self.entries.entry(analyst).or_default();
    }

    pub fn charge(&mut self, analyst: &AnalystId, budget: PrivacyBudget) -> Result<()> {
        if !(budget.epsilon >= 0.0 && budget.delta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "charges must be non-negative, got ({}, {})",
                budget.epsilon, budget.delta
            )));
        }
        self.entries
            .get_mut(analyst)
            .ok_or_else(|| Error::UnknownAnalyst(analyst.clone()))?
            .push(budget);
        Ok(())
    }

    pub fn charges(&self, analyst: &AnalystId) -> Result<&[PrivacyBudget]> {
        self.entries
            .get(analyst)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownAnalyst(analyst.clone()))
    }

    /// Total loss of one analyst under the ledger's mode.
    pub fn total(&self, analyst: &AnalystId) -> Result<PrivacyBudget> {
        self.total_under(&self.mode, analyst)
    }

    pub fn total_under(
        &self,
        mode: &CompositionMode,
        analyst: &AnalystId,
    ) -> Result<PrivacyBudget> {
        mode.compose(self.charges(analyst)?)
    }

    pub fn report(&self) -> Result<LedgerReport> {
        let advanced = match &self.mode {
            m @ CompositionMode::Advanced { .. } => m.clone(),
            _ => CompositionMode::advanced(),
        };
        let rdp = match &self.mode {
            m @ CompositionMode::Rdp { .. } => m.clone(),
            _ => CompositionMode::rdp(),
        };
        let mut analysts = BTreeMap::new();
        for (id, charges) in &self.entries {
            analysts.insert(
                id.clone(),
                AnalystTotals {
                    charges: charges.len(),
                    basic: CompositionMode::Basic.compose(charges)?,
                    advanced: advanced.compose(charges)?,
                    rdp: rdp.compose(charges)?,
                },
            );
        }
        Ok(LedgerReport {
            mode: self.mode.clone(),
            analysts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(e: f64, d: f64) -> PrivacyBudget {
        PrivacyBudget {
            epsilon: e,
            delta: d,
        }
    }

    /// Straight evaluation of the k-fold bound with no log-space tricks.
    fn advanced_direct(eps: f64, delta: f64, k: u64, i: u64) -> (f64, f64) {
        let binom = |n: u64, r: u64| -> f64 {
            (0..r).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
        };
        let mut num = 0.0;
        for l in 0..i {
            num +=
                binom(k, l) * (((k - l) as f64 * eps).exp() - ((k - 2 * i + l) as f64 * eps).exp());
        }
        let delta_i = num / (1.0 + eps.exp()).powi(k as i32);
        (
            (k - 2 * i) as f64 * eps,
            1.0 - (1.0 - delta).powi(k as i32) * (1.0 - delta_i),
        )
    }

    #[test]
    fn basic_examples() {
        assert_eq!(compose_basic(&[]), PrivacyBudget::ZERO);
        let t = compose_basic(&[b(0.5, 1e-9), b(0.3, 1e-9)]);
        assert!((t.epsilon - 0.8).abs() < 1e-15);
        assert!((t.delta - 2e-9).abs() < 1e-24);
    }

    #[test]
    fn advanced_degenerate_cases() {
        let single = compose_advanced(0.4, 1e-7, 1, 0).unwrap();
        assert_eq!(single, b(0.4, 1e-7));
        let r = compose_advanced(0.1, 1e-9, 5, 0).unwrap();
        assert!((r.epsilon - 0.5).abs() < 1e-15);
        let expect = 1.0 - (1.0f64 - 1e-9).powi(5);
        assert!((r.delta - expect).abs() <= 1e-6 * expect);
        assert!(compose_advanced(0.1, 1e-9, 5, 3).is_err());
        assert!(compose_advanced(0.1, 1e-9, 0, 0).is_err());
    }

    #[test]
    fn advanced_matches_direct_evaluation() {
        let (eps, delta, k) = (0.1, 1e-9, 10);
        for i in 0..=k / 2 {
            let got = compose_advanced(eps, delta, k, i).unwrap();
            let (e, d) = advanced_direct(eps, delta, k, i);
            assert!((got.epsilon - e).abs() < 1e-12);
            assert!(
                (got.delta - d).abs() <= 1e-6 * d,
                "i={i}: {} vs {d}",
                got.delta
            );
        }
        let best = (1..=k / 2)
            .map(|i| compose_advanced(eps, delta, k, i).unwrap().epsilon)
            .fold(f64::INFINITY, f64::min);
        assert!(best < k as f64 * eps);
    }

    #[test]
    fn advanced_handles_large_k() {
        let r = compose_advanced(0.01, 1e-9, 10_000, 2_000).unwrap();
        assert!(r.epsilon.is_finite() && r.delta <= 1.0);
        let best = best_advanced(0.01, 1e-9, 10_000, 1e-5).unwrap();
        assert!(best.epsilon < 100.0);
        assert!(best.delta <= 1e-5);
    }

    #[test]
    fn rdp_single_point_grid() {
        let c = RdpCurve {
            orders: vec![2.0],
            epsilons: vec![0.3],
        };
        let r = compose_rdp_and_convert(&[c], 1e-5).unwrap();
        assert!((r.epsilon - (0.3 + (1e5f64).ln())).abs() < 1e-12);
        assert_eq!(r.delta, 1e-5);
    }

    #[test]
    fn rdp_doubling_doubles_sum_term() {
        let orders = [2.0, 4.0];
        let c = RdpCurve {
            orders: orders.to_vec(),
            epsilons: vec![0.2, 0.5],
        };
        let c2 = RdpCurve {
            orders: orders.to_vec(),
            epsilons: vec![0.4, 1.0],
        };
        let ln = (1e6f64).ln();
        let one = compose_rdp_and_convert(std::slice::from_ref(&c), 1e-6)
            .unwrap()
            .epsilon;
        let two = compose_rdp_and_convert(&[c2], 1e-6).unwrap().epsilon;
        let expect_one = (0.2 + ln).min(0.5 + ln / 3.0);
        let expect_two = (0.4 + ln).min(1.0 + ln / 3.0);
        assert!((one - expect_one).abs() < 1e-12);
        assert!((two - expect_two).abs() < 1e-12);
    }

    #[test]
    fn rdp_rejects_bad_grids() {
        let c = RdpCurve {
            orders: vec![],
            epsilons: vec![],
        };
        assert!(compose_rdp_and_convert(&[c], 1e-6).is_err());
        let a = RdpCurve::gaussian(&[2.0, 3.0], 1.0, 1.0);
        let b2 = RdpCurve::gaussian(&[2.0, 4.0], 1.0, 1.0);
        assert!(compose_rdp_and_convert(&[a, b2], 1e-6).is_err());
    }

    #[test]
    fn rdp_gaussian_close_to_analytic() {
        let sigma = 5.0;
        let delta = 1e-9;
        let rdp = compose_rdp_and_convert(
            &[RdpCurve::gaussian(&DEFAULT_RDP_ORDERS, sigma, 1.0)],
            delta,
        )
        .unwrap()
        .epsilon;
        // Analytic epsilon at this sigma: invert delta_at by bisection.
        let (mut lo, mut hi) = (1e-6, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gauss::delta_at(mid, sigma, 1.0).unwrap() <= delta {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(rdp >= hi);
        assert!((rdp - hi) / hi <= 0.25, "rdp={rdp} analytic={hi}");
    }

    #[test]
    fn ledger_totals() {
        let mut l = PrivacyLedger::new(CompositionMode::Basic);
        let (a, bb) = (AnalystId::from("a"), AnalystId::from("b"));
        l.register(a.clone());
        l.register(bb.clone());
        assert_eq!(l.total(&a).unwrap(), PrivacyBudget::ZERO);
        l.charge(&a, b(0.2, 1e-9)).unwrap();
        l.charge(&bb, b(0.7, 1e-9)).unwrap();
        l.charge(&a, b(0.1, 1e-9)).unwrap();
        assert!((l.total(&a).unwrap().epsilon - 0.3).abs() < 1e-15);
        assert!((l.total(&bb).unwrap().epsilon - 0.7).abs() < 1e-15);
        assert!(matches!(
            l.total(&"c".into()),
            Err(Error::UnknownAnalyst(_))
        ));
        assert!(l.charge(&a, b(-0.1, 0.0)).is_err());
        let report = l.report().unwrap();
        assert_eq!(report.analysts[&a].charges, 2);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"advanced\""));
    }

    #[test]
    fn advanced_not_worse_than_basic_for_identical_charges() {
        for k in 3..40 {
            let mut l = PrivacyLedger::new(CompositionMode::advanced());
            let a = AnalystId::from("a");
            l.register(a.clone());
            for _ in 0..k {
                l.charge(&a, b(0.1, 1e-9)).unwrap();
            }
            let adv = l.total(&a).unwrap();
            let basic = l.total_under(&CompositionMode::Basic, &a).unwrap();
            assert!(adv.epsilon <= basic.epsilon + 1e-12, "k={k}");
        }
    }

    #[test]
    fn modes_agree_on_a_single_charge() {
        let mut l = PrivacyLedger::new(CompositionMode::Basic);
        let a = AnalystId::from("a");
        l.register(a.clone());
        l.charge(&a, b(0.37, 1e-9)).unwrap();
        assert_eq!(
            l.total_under(&CompositionMode::Basic, &a).unwrap(),
            l.total_under(&CompositionMode::advanced(), &a).unwrap()
        );
    }

    proptest! {
        #[test]
        fn basic_is_permutation_invariant(mut v in proptest::collection::vec((0.0f64..2.0, 0.0f64..1e-6), 0..20), seed in any::<u64>()) {
            let charges: Vec<PrivacyBudget> = v.iter().map(|&(e, d)| b(e, d)).collect();
            let a = compose_basic(&charges);
            // Deterministic shuffle driven by the seed.
            let n = v.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled: Vec<PrivacyBudget> = v.iter().map(|&(e, d)| b(e, d)).collect();
            let c = compose_basic(&shuffled);
            prop_assert!((a.epsilon - c.epsilon).abs() < 1e-12);
            prop_assert!((a.delta - c.delta).abs() < 1e-18);
        }

        #[test]
        fn adding_a_charge_never_lowers_a_total(
            charges in proptest::collection::vec((0.01f64..1.0, 1e-10f64..1e-8), 1..12),
            extra in (0.01f64..1.0, 1e-10f64..1e-8),
        ) {
            let a = AnalystId::from("a");
            for mode in [CompositionMode::Basic, CompositionMode::advanced(), CompositionMode::rdp()] {
                let mut l = PrivacyLedger::new(mode.clone());
                l.register(a.clone());
                for &(e, d) in &charges {
                    l.charge(&a, b(e, d)).unwrap();
                }
                let before = l.total(&a).unwrap().epsilon;
                l.charge(&a, b(extra.0, extra.1)).unwrap();
                let after = l.total(&a).unwrap().epsilon;
                prop_assert!(after >= before - 1e-12, "{mode:?}: {before} -> {after}");
            }
        }
    }
}
