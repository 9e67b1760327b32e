//! Per-query traces and run-level metrics: answered counts, fairness gain,
//! relative error, runtime and rejection reasons.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, QueryOutcome, Status};
use crate::error::{Error, Result};
use crate::model::{AnalystId, Demand, ViewId};

/// Default floor `c` of the relative error denominator.
pub const DEFAULT_ERROR_FLOOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fairness {
    pub dcfg: f64,
    pub ndcfg: f64,
}

/// Discounted cumulative fairness gain `sum |Q_i| / log2(1/l_i + 1)` and
/// its normalization by the total answered count (0 when nothing was
/// answered).
pub fn compute_ndcfg(
    counts: &BTreeMap<AnalystId, u64>,
    privileges: &BTreeMap<AnalystId, u32>,
) -> Result<Fairness> {
    let mut dcfg = 0.0;
    let mut total = 0u64;
    for (a, &n) in counts {
        let l = *privileges
            .get(a)
            .ok_or_else(|| Error::UnknownAnalyst(a.clone()))?;
        if l == 0 {
            return Err(Error::InvalidParameter(format!(
                "analyst `{a}` has privilege 0"
            )));
        }
        dcfg += n as f64 / (1.0 / l as f64 + 1.0).log2();
        total += n;
    }
    let ndcfg = if total == 0 { 0.0 } else { dcfg / total as f64 };
    Ok(Fairness { dcfg, ndcfg })
}

/// `|true - noisy| / max(true, c)`.
pub fn relative_error(truth: f64, noisy: f64, c: f64) -> f64 {
    (truth - noisy).abs() / truth.max(c)
}

/// One query as seen by the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub index: usize,
    pub analyst: AnalystId,
    pub view: ViewId,
    pub demand: Demand,
    pub true_value: f64,
    pub noisy: Option<f64>,
    pub variance: Option<f64>,
    pub epsilon: Option<f64>,
    pub charged_epsilon: f64,
    pub rejection: Option<String>,
    pub relative_error: Option<f64>,
    /// Table-level budget consumed after this query.
    pub cumulative_budget: f64,
    /// Wall-clock handling time; excluded from equality of reruns.
    #[serde(default)]
    pub elapsed_us: f64,
}

impl QueryTrace {
    pub fn new(
        index: usize,
        demand: Demand,
        true_value: f64,
        outcome: &QueryOutcome,
        cumulative_budget: f64,
        error_floor: f64,
        elapsed_us: f64,
    ) -> Self {
        let (noisy, variance, epsilon, charged, rejection) = match &outcome.status {
            Status::Answered {
                value,
                variance,
                epsilon,
                charged_epsilon,
            } => (
                Some(*value),
                Some(*variance),
                Some(*epsilon),
                *charged_epsilon,
                None,
            ),
            Status::Rejected { reason } => (None, None, None, 0.0, Some(reason.label().to_owned())),
        };
        Self {
            index,
            analyst: outcome.analyst_id.clone(),
            view: outcome.view_id.clone(),
            demand,
            true_value,
            noisy,
            variance,
            epsilon,
            charged_epsilon: charged,
            rejection,
            relative_error: noisy.map(|n| relative_error(true_value, n, error_floor)),
            cumulative_budget,
            elapsed_us,
        }
    }

    pub fn answered(&self) -> bool {
        self.noisy.is_some()
    }

    /// Answered accuracy-mode query whose variance exceeds its demand.
    pub fn violates_accuracy(&self) -> bool {
        match (self.demand, self.variance) {
            (Demand::Accuracy { variance: want }, Some(got)) => got > want * (1.0 + 1e-9),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalystSummary {
    pub privilege: u32,
    pub submitted: u64,
    pub answered: u64,
    pub rejected: u64,
    /// Row total of the provenance table at the end of the run.
    pub consumed: f64,
    pub row_cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub analysts: BTreeMap<AnalystId, AnalystSummary>,
    pub submitted: u64,
    pub answered: u64,
    pub rejected: u64,
    pub dcfg: f64,
    pub ndcfg: f64,
    pub consumed_budget: f64,
    pub delta_spent: f64,
    pub rejections: BTreeMap<String, u64>,
    pub mean_relative_error: Option<f64>,
    pub accuracy_violations: u64,
    pub clamped_demands: u64,
    pub runtime_total_ms: f64,
    pub runtime_mean_ms: f64,
}

impl RunReport {
    pub fn summarize(engine: &Engine, traces: &[QueryTrace]) -> Result<Self> {
        let table = engine.table();
        let mut analysts = BTreeMap::new();
        for a in engine.analysts() {
            analysts.insert(
                a.id.clone(),
                AnalystSummary {
                    privilege: a.privilege,
                    submitted: 0,
                    answered: 0,
                    rejected: 0,
                    consumed: table.row_total(&a.id)?,
                    row_cap: table.row_cap(&a.id)?,
                },
            );
        }
        let mut rejections = BTreeMap::new();
        let mut errors = Vec::new();
        let mut violations = 0;
        let mut runtime_us = 0.0;
        for t in traces {
            let s = analysts
                .get_mut(&t.analyst)
                .ok_or_else(|| Error::UnknownAnalyst(t.analyst.clone()))?;
            s.submitted += 1;
            if t.answered() {
                s.answered += 1;
            } else {
                s.rejected += 1;
            }
            if let Some(r) = &t.rejection {
                *rejections.entry(r.clone()).or_insert(0) += 1;
            }
            errors.extend(t.relative_error);
            violations += u64::from(t.violates_accuracy());
            runtime_us += t.elapsed_us;
        }
        let counts = analysts
            .iter()
            .map(|(a, s)| (a.clone(), s.answered))
            .collect();
        let privileges = analysts
            .iter()
            .map(|(a, s)| (a.clone(), s.privilege))
            .collect();
        let fairness = compute_ndcfg(&counts, &privileges)?;
        let answered = analysts.values().map(|s| s.answered).sum();
        let submitted = traces.len() as u64;
        Ok(Self {
            submitted,
            answered,
            rejected: submitted - answered,
            analysts,
            dcfg: fairness.dcfg,
            ndcfg: fairness.ndcfg,
            consumed_budget: engine.consumed_budget(),
            delta_spent: table.delta_spent(),
            rejections,
            mean_relative_error: (!errors.is_empty())
                .then(|| errors.iter().sum::<f64>() / errors.len() as f64),
            accuracy_violations: violations,
            clamped_demands: engine.clamped_demands(),
            runtime_total_ms: runtime_us / 1e3,
            runtime_mean_ms: if traces.is_empty() {
                0.0
            } else {
                runtime_us / 1e3 / traces.len() as f64
            },
        })
    }
}
