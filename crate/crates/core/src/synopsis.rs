//! Noisy histogram synopses: global releases that improve by inverse-variance
//! combination, and per-analyst local releases derived from them by adding
//! more noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::{self, NoiseSource, NoiseStage};
use crate::model::{AnalystId, HistogramView, LinearQuery, PrivacyBudget, ViewId};

/// Slack allowed when checking that a local epsilon does not exceed the
/// global epsilon it is derived from.
const EPSILON_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "analyst", rename_all = "snake_case")]
pub enum SynopsisKind {
    Global,
    Local(AnalystId),
}

/// One source release folded into a combined global synopsis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub weight: f64,
    pub source_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synopsis {
    pub view_id: ViewId,
    pub noisy_counts: Vec<f64>,
    pub per_bin_variance: f64,
    pub sensitivity: f64,
    pub budget: PrivacyBudget,
    pub kind: SynopsisKind,
    pub lineage: Vec<LineageRecord>,
}

/// Debug export of a synopsis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynopsisSnapshot {
    pub view_id: ViewId,
    pub kind: SynopsisKind,
    pub epsilon: f64,
    pub delta: f64,
    pub per_bin_variance: f64,
    pub counts: Vec<f64>,
}

impl Synopsis {
    pub fn is_global(&self) -> bool {
        self.kind == SynopsisKind::Global
    }

    pub fn epsilon(&self) -> f64 {
        self.budget.epsilon
    }

    pub fn snapshot(&self) -> SynopsisSnapshot {
        SynopsisSnapshot {
            view_id: self.view_id.clone(),
            kind: self.kind.clone(),
            epsilon: self.budget.epsilon,
            delta: self.budget.delta,
            per_bin_variance: self.per_bin_variance,
            counts: self.noisy_counts.clone(),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// Releases every bin of `view` with calibrated Gaussian noise.
pub fn build_global<N: NoiseSource + ?Sized>(
    view: &HistogramView,
    epsilon: f64,
    delta: f64,
    noise: &mut N,
) -> Result<Synopsis> {
    check_epsilon(epsilon)?;
    let sigma = gauss::sigma_for(epsilon, delta, view.sensitivity)?;
    let variance = sigma * sigma;
    let mut counts: Vec<f64> = view.true_counts.iter().map(|&c| c as f64).collect();
    gauss::perturb(&mut counts, variance, NoiseStage::Base, noise);
    Ok(Synopsis {
        view_id: view.id.clone(),
        noisy_counts: counts,
        per_bin_variance: variance,
        sensitivity: view.sensitivity,
        budget: PrivacyBudget { epsilon, delta },
        kind: SynopsisKind::Global,
        lineage: vec![LineageRecord {
            weight: 1.0,
            source_variance: variance,
        }],
    })
}

/// Weight given to a fresh release when combining it with an older one.
pub fn combination_weight(old_variance: f64, fresh_variance: f64) -> f64 {
    old_variance / (fresh_variance + old_variance)
}

/// Spends `fresh_epsilon` on a new release of `view` and merges it into
/// `old` with the variance-minimising weight.
pub fn combine_global<N: NoiseSource + ?Sized>(
    old: &Synopsis,
    view: &HistogramView,
    fresh_epsilon: f64,
    delta: f64,
    noise: &mut N,
) -> Result<Synopsis> {
    if !old.is_global() {
        return Err(Error::InvalidParameter(
            "only global synopses can be combined".into(),
        ));
    }
    if old.view_id != view.id {
        return Err(Error::ViewMismatch {
            query_view: old.view_id.clone(),
            view: view.id.clone(),
        });
    }
    if !(fresh_epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fresh epsilon must be positive, got {fresh_epsilon}"
        )));
    }
    let fresh = build_global(view, fresh_epsilon, delta, noise)?;
    Ok(merge(old, &fresh))
}

/// Inverse-variance merge of two global releases of the same view.
pub fn merge(old: &Synopsis, fresh: &Synopsis) -> Synopsis {
    let (v_old, v_new) = (old.per_bin_variance, fresh.per_bin_variance);
    let w = combination_weight(v_old, v_new);
    let counts = old
        .noisy_counts
        .iter()
        .zip(&fresh.noisy_counts)
        .map(|(a, b)| (1.0 - w) * a + w * b)
        .collect();
    let mut lineage: Vec<LineageRecord> = old
        .lineage
        .iter()
        .map(|r| LineageRecord {
            weight: r.weight * (1.0 - w),
            source_variance: r.source_variance,
        })
        .collect();
    lineage.push(LineageRecord {
        weight: w,
        source_variance: v_new,
    });
    Synopsis {
        view_id: old.view_id.clone(),
        noisy_counts: counts,
        per_bin_variance: v_old * v_new / (v_old + v_new),
        sensitivity: old.sensitivity,
        budget: PrivacyBudget {
            epsilon: old.budget.epsilon + fresh.budget.epsilon,
            delta: old.budget.delta + fresh.budget.delta,
        },
        kind: SynopsisKind::Global,
        lineage,
    }
}

/// Variance a local release at `epsilon` carries when derived from a global
/// of variance `global_variance`.
///
/// A combined global can be noisier than a one-shot release at its own
/// cumulative epsilon, so the local never gets less noise than its source.
pub fn local_variance(
    epsilon: f64,
    delta: f64,
    sensitivity: f64,
    global_variance: f64,
) -> Result<f64> {
    let s = gauss::sigma_for(epsilon, delta, sensitivity)?;
    Ok((s * s).max(global_variance))
}

/// Derives a local synopsis for `analyst` by adding independent noise on
/// top of `global`.
pub fn derive_local<N: NoiseSource + ?Sized>(
    global: &Synopsis,
    analyst: &AnalystId,
    epsilon: f64,
    delta: f64,
    noise: &mut N,
) -> Result<Synopsis> {
    if !global.is_global() {
        return Err(Error::InvalidParameter(
            "locals derive from global synopses only".into(),
        ));
    }
    check_epsilon(epsilon)?;
    if epsilon > global.budget.epsilon * (1.0 + EPSILON_SLACK) {
        return Err(Error::NegativeIncrement { epsilon });
    }
    let variance = local_variance(epsilon, delta, global.sensitivity, global.per_bin_variance)?;
    let mut counts = global.noisy_counts.clone();
    gauss::perturb(
        &mut counts,
        variance - global.per_bin_variance,
        NoiseStage::Increment,
        noise,
    );
    Ok(Synopsis {
        view_id: global.view_id.clone(),
        noisy_counts: counts,
        per_bin_variance: variance,
        sensitivity: global.sensitivity,
        budget: PrivacyBudget { epsilon, delta },
        kind: SynopsisKind::Local(analyst.clone()),
        lineage: Vec::new(),
    })
}

/// Answers `q` from `synopsis`, returning the estimate and its variance.
pub fn answer(synopsis: &Synopsis, q: &LinearQuery) -> Result<(f64, f64)> {
    if q.view_id != synopsis.view_id {
        return Err(Error::ViewMismatch {
            query_view: q.view_id.clone(),
            view: synopsis.view_id.clone(),
        });
    }
    if q.coefficients.len() != synopsis.noisy_counts.len() {
        return Err(Error::LengthMismatch {
            view: synopsis.view_id.clone(),
            got: q.coefficients.len(),
            expected: synopsis.noisy_counts.len(),
        });
    }
    let value = q
        .coefficients
        .iter()
        .zip(&synopsis.noisy_counts)
        .map(|(c, x)| c * x)
        .sum();
    Ok((value, q.norm_sq() * synopsis.per_bin_variance))
}
