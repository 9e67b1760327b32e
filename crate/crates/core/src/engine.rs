//! The query loop: translate a demand into a budget, check it against the
//! provenance table, run the selected mechanism and charge the table.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::{CompositionMode, PrivacyLedger};
use crate::error::{Error, Result};
use crate::gauss::{self, NoiseSource, NoiseStage, RngNoise};
use crate::model::{
    evaluate_query_true, query_sensitivity, Analyst, AnalystId, Demand, HistogramView, LinearQuery,
    PrivacyBudget, ViewId,
};
use crate::provenance::{self, Charge, ColumnAccounting, ProvenanceTable, Violation};
use crate::synopsis::{self, Synopsis};

pub const DEFAULT_PRECISION: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MechanismKind {
    #[serde(rename = "chorus")]
    Chorus,
    #[serde(rename = "chorusp")]
    ChorusP,
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "dprovdb")]
    DProvDb,
    #[serde(rename = "sprivatesql")]
    SPrivateSql,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 5] = [
        MechanismKind::DProvDb,
        MechanismKind::Vanilla,
        MechanismKind::SPrivateSql,
        MechanismKind::ChorusP,
        MechanismKind::Chorus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Chorus => "chorus",
            MechanismKind::ChorusP => "chorusp",
            MechanismKind::Vanilla => "vanilla",
            MechanismKind::DProvDb => "dprovdb",
            MechanismKind::SPrivateSql => "sprivatesql",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mechanism `{s}`")))
    }
}

/// How per-analyst row caps are derived from privileges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowConstraints {
    /// `l_i / sum(l) * psi`; every analyst must be known up front.
    SumNormalized,
    /// `min(psi, tau * l_i / l_max * psi)`. Without `l_max` the largest
    /// registered privilege is used.
    MaxNormalized { l_max: Option<u32>, tau: f64 },
}

impl RowConstraints {
    /// Sum-normalized rows for the independent-release mechanisms and
    /// max-normalized rows for the additive one.
    pub fn default_for(mechanism: MechanismKind) -> Self {
        match mechanism {
            MechanismKind::DProvDb => RowConstraints::MaxNormalized {
                l_max: None,
                tau: 1.0,
            },
            _ => RowConstraints::SumNormalized,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub mechanism: MechanismKind,
    pub table_cap: f64,
    /// Delta of every individual release.
    pub delta: f64,
    /// Ceiling on the total delta spent; defaults to one over the dataset size.
    pub delta_cap: Option<f64>,
    pub precision: f64,
    /// Row cap rule; `None` picks [`RowConstraints::default_for`].
    pub rows: Option<RowConstraints>,
    pub ledger: CompositionMode,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mechanism: MechanismKind::DProvDb,
            table_cap: 1.6,
            delta: DEFAULT_DELTA,
            delta_cap: None,
            precision: DEFAULT_PRECISION,
            rows: None,
            ledger: CompositionMode::Basic,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    /// A provenance constraint would be exceeded.
    Constraint { violation: Violation },
    /// No budget up to the table cap reaches the requested accuracy.
    Infeasible,
    /// The precomputed static synopsis cannot meet the demand.
    StaticInsufficient,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::Constraint { violation } => violation.label(),
            RejectReason::Infeasible => "infeasible",
            RejectReason::StaticInsufficient => "static",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Answered {
        value: f64,
        variance: f64,
        /// Budget the demand translated to (or the explicit budget).
        epsilon: f64,
        /// Budget actually added to the analyst's row.
        charged_epsilon: f64,
    },
    Rejected {
        #[serde(flatten)]
        reason: RejectReason,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: u64,
    pub analyst_id: AnalystId,
    pub view_id: ViewId,
    #[serde(flatten)]
    pub status: Status,
}

impl QueryOutcome {
    pub fn is_answered(&self) -> bool {
        matches!(self.status, Status::Answered { .. })
    }
}

/// Largest post-friction variance a fresh release may have so that merging
/// it into a global of variance `v_global` reaches `target`.
///
/// Equivalent to maximizing `(target - w^2 v') / (1 - w)^2` over `w`, whose
/// optimum is `w = target / v'`. Returns `None` when the global already
/// meets the target.
pub fn friction_target(target: f64, v_global: f64) -> Option<f64> {
    (v_global > target).then(|| target * v_global / (v_global - target))
}

/// Weight on the existing global in the optimal combination.
pub fn friction_weight(target: f64, v_global: f64) -> f64 {
    (target / v_global).min(1.0)
}

/// Budget for a fresh global release that brings the view's per-bin
/// variance to `target`, accounting for what the current global already
/// provides.
pub fn translate_additive(
    target: f64,
    global_variance: Option<f64>,
    sensitivity: f64,
    delta: f64,
    precision: f64,
    upper: f64,
) -> Result<f64> {
    let effective = match global_variance {
        Some(v) => friction_target(target, v).unwrap_or(target),
        None => target,
    };
    gauss::translate_vanilla(sensitivity, effective, delta, precision, upper)
}

fn coefficient_key(q: &LinearQuery) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for c in &q.coefficients {
        c.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Accuracy target after the decision: budget to translate, or a rejection.
enum Plan {
    Answer {
        epsilon: f64,
        charge: Charge,
        /// Global must be (re)built to this epsilon first (additive only).
        grow_to: Option<f64>,
        /// Local release epsilon (additive) or synopsis epsilon (vanilla).
        release_epsilon: f64,
    },
    Cached {
        epsilon: f64,
    },
    Reject(RejectReason, f64),
}

pub struct Engine {
    config: EngineConfig,
    views: BTreeMap<ViewId, HistogramView>,
    analysts: BTreeMap<AnalystId, Analyst>,
    table: ProvenanceTable,
    ledger: PrivacyLedger,
    rng: ChaCha20Rng,
    globals: BTreeMap<ViewId, Synopsis>,
    locals: BTreeMap<(AnalystId, ViewId), Synopsis>,
    granted: HashMap<(AnalystId, ViewId, u64), f64>,
    next_query: u64,
    clamps: u64,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        views: Vec<HistogramView>,
        analysts: Vec<Analyst>,
        dataset_size: usize,
    ) -> Result<Self> {
        if !(config.table_cap.is_finite() && config.table_cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "table cap must be positive, got {}",
                config.table_cap
            )));
        }
        if !(config.delta >= gauss::MIN_DELTA && config.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in [{:e}, 1), got {}",
                gauss::MIN_DELTA,
                config.delta
            )));
        }
        if !(config.precision > 0.0) {
            return Err(Error::InvalidParameter("precision must be positive".into()));
        }
        let delta_cap = config.delta_cap.unwrap_or(1.0 / dataset_size.max(1) as f64);
        let accounting = match config.mechanism {
            MechanismKind::DProvDb | MechanismKind::SPrivateSql => ColumnAccounting::Max,
            _ => ColumnAccounting::Sum,
        };
        let mut table = ProvenanceTable::new(accounting, config.table_cap, delta_cap)?;
        let mut ledger = PrivacyLedger::new(config.ledger.clone());

        let mut by_id = BTreeMap::new();
        for a in &analysts {
            if by_id.insert(a.id.clone(), a.clone()).is_some() {
                return Err(Error::DuplicateAnalyst(a.id.clone()));
            }
        }
        let caps = Self::row_caps(&config, &analysts)?;
        for a in &analysts {
            table.add_analyst(a, caps[&a.id])?;
            ledger.register(a.id.clone());
        }

        let view_ids: Vec<ViewId> = views.iter().map(|v| v.id.clone()).collect();
        let mut view_map = BTreeMap::new();
        for v in views {
            if view_map.contains_key(&v.id) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate view `{}`",
                    v.id
                )));
            }
            view_map.insert(v.id.clone(), v);
        }
        let column_caps = if config.mechanism == MechanismKind::SPrivateSql {
            let sens: Vec<(ViewId, f64)> = view_map
                .values()
                .map(|v| (v.id.clone(), v.sensitivity))
                .collect();
            if sens.is_empty() {
                BTreeMap::new()
            } else {
                provenance::static_view_caps(&sens, config.table_cap)?
            }
        } else {
            provenance::water_filling_caps(&view_ids, config.table_cap)
        };
        for (v, cap) in &column_caps {
            table.add_view(v.clone(), *cap)?;
        }

        let mut engine = Self {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            config,
            views: view_map,
            analysts: by_id,
            table,
            ledger,
            globals: BTreeMap::new(),
            locals: BTreeMap::new(),
            granted: HashMap::new(),
            next_query: 0,
            clamps: 0,
        };
        if engine.config.mechanism == MechanismKind::SPrivateSql {
            engine.build_static(&column_caps)?;
        }
        Ok(engine)
    }

    fn row_caps(config: &EngineConfig, analysts: &[Analyst]) -> Result<BTreeMap<AnalystId, f64>> {
        let psi = config.table_cap;
        if analysts.is_empty() {
            return Ok(BTreeMap::new());
        }
        // Chorus has one shared budget; static synopses are shared by all.
        if matches!(
            config.mechanism,
            MechanismKind::Chorus | MechanismKind::SPrivateSql
        ) {
            return Ok(analysts.iter().map(|a| (a.id.clone(), psi)).collect());
        }
        match config
            .rows
            .unwrap_or(RowConstraints::default_for(config.mechanism))
        {
            RowConstraints::SumNormalized => provenance::sum_normalized_caps(analysts, psi),
            RowConstraints::MaxNormalized { l_max, tau } => {
                let l_max = l_max
                    .unwrap_or_else(|| analysts.iter().map(|a| a.privilege).max().unwrap_or(1));
                provenance::max_normalized_caps(analysts, psi, l_max, tau)
            }
        }
    }

    fn build_static(&mut self, caps: &BTreeMap<ViewId, f64>) -> Result<()> {
        for (v, &eps) in caps {
            let view = &self.views[v];
            let syn =
                synopsis::build_global(view, eps, self.config.delta, &mut RngNoise(&mut self.rng))?;
            self.table.charge_view(v, eps, self.config.delta)?;
            self.globals.insert(v.clone(), syn);
        }
        Ok(())
    }

    /// Registers an analyst after start-up. Only possible when row caps do
    /// not depend on the full analyst set.
    pub fn add_analyst(&mut self, analyst: Analyst) -> Result<()> {
        if self.analysts.contains_key(&analyst.id) {
            return Err(Error::DuplicateAnalyst(analyst.id));
        }
        let rows = self
            .config
            .rows
            .unwrap_or(RowConstraints::default_for(self.config.mechanism));
        let cap = match (self.config.mechanism, rows) {
            (MechanismKind::Chorus | MechanismKind::SPrivateSql, _) => self.config.table_cap,
            (
                _,
                RowConstraints::MaxNormalized {
                    l_max: Some(l_max),
                    tau,
                },
            ) => provenance::max_normalized_cap(
                analyst.privilege,
                self.config.table_cap,
                l_max,
                tau,
            )?,
            _ => {
                return Err(Error::InvalidParameter(
                    "late registration needs max-normalized rows with a fixed l_max".into(),
                ))
            }
        };
        self.table.add_analyst(&analyst, cap)?;
        self.ledger.register(analyst.id.clone());
        self.analysts.insert(analyst.id.clone(), analyst);
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn table(&self) -> &ProvenanceTable {
        &self.table
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }

    pub fn view(&self, v: &ViewId) -> Option<&HistogramView> {
        self.views.get(v)
    }

    pub fn views(&self) -> impl Iterator<Item = &HistogramView> {
        self.views.values()
    }

    pub fn analysts(&self) -> impl Iterator<Item = &Analyst> {
        self.analysts.values()
    }

    pub fn global(&self, v: &ViewId) -> Option<&Synopsis> {
        self.globals.get(v)
    }

    pub fn local(&self, a: &AnalystId, v: &ViewId) -> Option<&Synopsis> {
        self.locals.get(&(a.clone(), v.clone()))
    }

    /// Number of accuracy demands tightened to an earlier, stricter grant.
    pub fn clamped_demands(&self) -> u64 {
        self.clamps
    }

    /// Cumulative budget consumed so far, as counted by the table.
    pub fn consumed_budget(&self) -> f64 {
        self.table.table_total()
    }

    pub fn handle_query(&mut self, q: &LinearQuery) -> Result<QueryOutcome> {
        self.handle_query_with(q, None)
    }

    /// As [`Engine::handle_query`], drawing noise from `noise` instead of the
    /// engine's own generator.
    pub fn handle_query_with(
        &mut self,
        q: &LinearQuery,
        noise: Option<&mut dyn NoiseSource>,
    ) -> Result<QueryOutcome> {
        q.validate()?;
        let view = self
            .views
            .get(&q.view_id)
            .ok_or_else(|| Error::UnknownView(q.view_id.clone()))?;
        if q.coefficients.len() != view.bin_count() {
            return Err(Error::LengthMismatch {
                view: view.id.clone(),
                got: q.coefficients.len(),
                expected: view.bin_count(),
            });
        }
        if !self.analysts.contains_key(&q.analyst_id) {
            return Err(Error::UnknownAnalyst(q.analyst_id.clone()));
        }
        let q = self.clamp_demand(q);
        let query_id = self.next_query;
        self.next_query += 1;

        let plan = match self.config.mechanism {
            MechanismKind::Chorus | MechanismKind::ChorusP => self.plan_direct(&q)?,
            MechanismKind::Vanilla => self.plan_vanilla(&q)?,
            MechanismKind::DProvDb => self.plan_additive(&q)?,
            MechanismKind::SPrivateSql => self.plan_static(&q)?,
        };

        let mut own_noise;
        let noise: &mut dyn NoiseSource = match noise {
            Some(n) => n,
            None => {
                own_noise = RngNoise(&mut self.rng);
                &mut own_noise
            }
        };

        let status = match plan {
            Plan::Reject(reason, requested) => {
                if let RejectReason::Constraint { violation } = &reason {
                    self.table
                        .record_rejection(&q.analyst_id, &q.view_id, requested, *violation);
                }
                Status::Rejected { reason }
            }
            Plan::Cached { epsilon } => {
                let syn = match self.config.mechanism {
                    MechanismKind::SPrivateSql => &self.globals[&q.view_id],
                    _ => &self.locals[&(q.analyst_id.clone(), q.view_id.clone())],
                };
                let (value, variance) = synopsis::answer(syn, &q)?;
                Status::Answered {
                    value,
                    variance,
                    epsilon,
                    charged_epsilon: 0.0,
                }
            }
            Plan::Answer {
                epsilon,
                charge,
                grow_to,
                release_epsilon,
            } => {
                let (value, variance) = Self::run(
                    &self.config,
                    &self.views[&q.view_id],
                    &mut self.globals,
                    &mut self.locals,
                    &q,
                    grow_to,
                    release_epsilon,
                    noise,
                )?;
                self.table.apply(&q.analyst_id, &q.view_id, charge)?;
                if charge.analyst_epsilon > 0.0 {
                    self.ledger.charge(
                        &q.analyst_id,
                        PrivacyBudget {
                            epsilon: charge.analyst_epsilon,
                            delta: self.config.delta,
                        },
                    )?;
                }
                Status::Answered {
                    value,
                    variance,
                    epsilon,
                    charged_epsilon: charge.analyst_epsilon,
                }
            }
        };
        if let (Status::Answered { variance, .. }, Demand::Accuracy { .. }) = (&status, q.demand) {
            let key = (q.analyst_id.clone(), q.view_id.clone(), coefficient_key(&q));
            let best = self.granted.entry(key).or_insert(f64::INFINITY);
            *best = best.min(*variance);
        }
        Ok(QueryOutcome {
            query_id,
            analyst_id: q.analyst_id.clone(),
            view_id: q.view_id.clone(),
            status,
        })
    }

    /// Analysts are assumed never to loosen their demand on a repeated
    /// query; a looser repeat is tightened to the best variance granted.
    fn clamp_demand(&mut self, q: &LinearQuery) -> LinearQuery {
        let mut q = q.clone();
        if let Demand::Accuracy { variance } = q.demand {
            let key = (q.analyst_id.clone(), q.view_id.clone(), coefficient_key(&q));
            if let Some(&best) = self.granted.get(&key) {
                if variance > best {
                    log::debug!(
                        "clamping repeat demand of {} on {} from {variance} to {best}",
                        q.analyst_id,
                        q.view_id
                    );
                    self.clamps += 1;
                    q.demand = Demand::Accuracy { variance: best };
                }
            }
        }
        q
    }

    fn translate(&self, sensitivity: f64, target: f64) -> Result<Option<f64>> {
        match gauss::translate_vanilla(
            sensitivity,
            target,
            self.config.delta,
            self.config.precision,
            self.config.table_cap,
        ) {
            Ok(e) => Ok(Some(e)),
            Err(Error::InfeasibleTarget { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn vanilla_check(
        &self,
        q: &LinearQuery,
        epsilon: f64,
    ) -> Result<std::result::Result<Charge, Violation>> {
        self.table
            .check_vanilla(&q.analyst_id, &q.view_id, epsilon, self.config.delta)
    }

    fn plan_direct(&self, q: &LinearQuery) -> Result<Plan> {
        let view = &self.views[&q.view_id];
        let epsilon = match q.demand {
            Demand::Budget { epsilon } => epsilon,
            Demand::Accuracy { variance } => {
                match self.translate(query_sensitivity(q, view), variance)? {
                    Some(e) => e,
                    None => return Ok(Plan::Reject(RejectReason::Infeasible, 0.0)),
                }
            }
        };
        Ok(match self.vanilla_check(q, epsilon)? {
            Ok(charge) => Plan::Answer {
                epsilon,
                charge,
                grow_to: None,
                release_epsilon: epsilon,
            },
            Err(v) => Plan::Reject(RejectReason::Constraint { violation: v }, epsilon),
        })
    }

    fn plan_vanilla(&self, q: &LinearQuery) -> Result<Plan> {
        let view = &self.views[&q.view_id];
        let epsilon = match q.demand {
            Demand::Budget { epsilon } => epsilon,
            Demand::Accuracy { variance } => {
                if let Some(local) = self.local(&q.analyst_id, &q.view_id) {
                    if q.norm_sq() * local.per_bin_variance <= variance {
                        return Ok(Plan::Cached {
                            epsilon: local.epsilon(),
                        });
                    }
                }
                match self.translate(view.sensitivity, variance / q.norm_sq())? {
                    Some(e) => e,
                    None => return Ok(Plan::Reject(RejectReason::Infeasible, 0.0)),
                }
            }
        };
        Ok(match self.vanilla_check(q, epsilon)? {
            Ok(charge) => Plan::Answer {
                epsilon,
                charge,
                grow_to: None,
                release_epsilon: epsilon,
            },
            Err(v) => Plan::Reject(RejectReason::Constraint { violation: v }, epsilon),
        })
    }

    fn plan_additive(&self, q: &LinearQuery) -> Result<Plan> {
        let view = &self.views[&q.view_id];
        let global = self.globals.get(&q.view_id);
        let global_eps = global.map_or(0.0, Synopsis::epsilon);
        let (epsilon, required_global) = match q.demand {
            Demand::Budget { epsilon } => (epsilon, global_eps.max(epsilon)),
            Demand::Accuracy { variance } => {
                if let Some(local) = self.local(&q.analyst_id, &q.view_id) {
                    if q.norm_sq() * local.per_bin_variance <= variance {
                        return Ok(Plan::Cached {
                            epsilon: local.epsilon(),
                        });
                    }
                }
                let target = variance / q.norm_sq();
                let Some(local_eps) = self.translate(view.sensitivity, target)? else {
                    return Ok(Plan::Reject(RejectReason::Infeasible, 0.0));
                };
                match global {
                    Some(g) if g.per_bin_variance <= target => {
                        (local_eps.min(global_eps), global_eps)
                    }
                    _ => {
                        let fresh = match translate_additive(
                            target,
                            global.map(|g| g.per_bin_variance),
                            view.sensitivity,
                            self.config.delta,
                            self.config.precision,
                            self.config.table_cap,
                        ) {
                            Ok(e) => e,
                            Err(Error::InfeasibleTarget { .. }) => {
                                return Ok(Plan::Reject(RejectReason::Infeasible, 0.0))
                            }
                            Err(e) => return Err(e),
                        };
                        let required = global_eps + fresh;
                        (local_eps.min(required), required)
                    }
                }
            }
        };
        let check = self.table.check_additive(
            &q.analyst_id,
            &q.view_id,
            epsilon,
            required_global,
            self.config.delta,
        )?;
        Ok(match check {
            Ok(charge) => Plan::Answer {
                epsilon,
                charge,
                grow_to: (required_global > global_eps || global.is_none())
                    .then_some(required_global),
                release_epsilon: epsilon,
            },
            Err(v) => Plan::Reject(RejectReason::Constraint { violation: v }, epsilon),
        })
    }

    fn plan_static(&self, q: &LinearQuery) -> Result<Plan> {
        let Some(syn) = self.globals.get(&q.view_id) else {
            return Ok(Plan::Reject(RejectReason::StaticInsufficient, 0.0));
        };
        let eps = syn.epsilon();
        let sufficient = match q.demand {
            Demand::Budget { epsilon } => epsilon <= eps,
            Demand::Accuracy { variance } => q.norm_sq() * syn.per_bin_variance <= variance,
        };
        if !sufficient {
            return Ok(Plan::Reject(RejectReason::StaticInsufficient, 0.0));
        }
        let check = self
            .table
            .check_additive(&q.analyst_id, &q.view_id, eps, eps, 0.0)?;
        Ok(match check {
            Ok(charge) if charge.analyst_epsilon == 0.0 => Plan::Cached { epsilon: eps },
            Ok(charge) => Plan::Answer {
                epsilon: eps,
                charge,
                grow_to: None,
                release_epsilon: eps,
            },
            Err(v) => Plan::Reject(RejectReason::Constraint { violation: v }, eps),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        config: &EngineConfig,
        view: &HistogramView,
        globals: &mut BTreeMap<ViewId, Synopsis>,
        locals: &mut BTreeMap<(AnalystId, ViewId), Synopsis>,
        q: &LinearQuery,
        grow_to: Option<f64>,
        release_epsilon: f64,
        noise: &mut dyn NoiseSource,
    ) -> Result<(f64, f64)> {
        let delta = config.delta;
        let key = (q.analyst_id.clone(), q.view_id.clone());
        match config.mechanism {
            MechanismKind::Chorus | MechanismKind::ChorusP => {
                let truth = evaluate_query_true(view, q)?;
                let sigma = gauss::sigma_for(release_epsilon, delta, query_sensitivity(q, view))?;
                Ok((
                    truth + noise.gaussian(sigma, NoiseStage::Base),
                    sigma * sigma,
                ))
            }
            MechanismKind::Vanilla => {
                let syn = synopsis::build_global(view, release_epsilon, delta, noise)?;
                let out = synopsis::answer(&syn, q)?;
                locals.insert(key, syn);
                Ok(out)
            }
            MechanismKind::DProvDb => {
                if let Some(target) = grow_to {
                    let updated = match globals.get(&q.view_id) {
                        Some(g) => {
                            synopsis::combine_global(g, view, target - g.epsilon(), delta, noise)?
                        }
                        None => synopsis::build_global(view, target, delta, noise)?,
                    };
                    globals.insert(q.view_id.clone(), updated);
                }
                let global = &globals[&q.view_id];
                let local =
                    synopsis::derive_local(global, &q.analyst_id, release_epsilon, delta, noise)?;
                let out = synopsis::answer(&local, q)?;
                locals.insert(key, local);
                Ok(out)
            }
            MechanismKind::SPrivateSql => synopsis::answer(&globals[&q.view_id], q),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_view, AttributeSpec, Dataset, ViewSpec};

    fn dataset() -> Dataset {
        let attrs = vec![
            AttributeSpec::integer_range("x", 0, 7).unwrap(),
            AttributeSpec::integer_range("y", 0, 3).unwrap(),
        ];
        let rows: Vec<Vec<String>> = (0..400)
            .map(|i| vec![(i % 8).to_string(), ((i / 8) % 4).to_string()])
            .collect();
        Dataset::from_values(attrs, rows).unwrap()
    }

    fn engine(mechanism: MechanismKind, psi: f64, analysts: &[(&str, u32)]) -> Engine {
        let data = dataset();
        let views = vec![
            build_view(&data, &ViewSpec::over(&["x"])).unwrap(),
            build_view(&data, &ViewSpec::over(&["y"])).unwrap(),
        ];
        let analysts = analysts
            .iter()
            .map(|(a, l)| Analyst::new(*a, *l).unwrap())
            .collect();
        let config = EngineConfig {
            mechanism,
            table_cap: psi,
            seed: 11,
            ..EngineConfig::default()
        };
        Engine::new(config, views, analysts, data.len()).unwrap()
    }

    fn budget_q(a: &str, view: &str, bins: usize, eps: f64) -> LinearQuery {
        LinearQuery::range(
            view.into(),
            bins,
            0,
            bins - 1,
            a.into(),
            Demand::Budget { epsilon: eps },
        )
        .unwrap()
    }

    fn acc_q(a: &str, view: &str, bins: usize, lo: usize, hi: usize, v: f64) -> LinearQuery {
        LinearQuery::range(
            view.into(),
            bins,
            lo,
            hi,
            a.into(),
            Demand::Accuracy { variance: v },
        )
        .unwrap()
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in MechanismKind::ALL {
            assert_eq!(m.name().parse::<MechanismKind>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("nope".parse::<MechanismKind>().is_err());
    }

    #[test]
    fn friction_closed_form() {
        assert_eq!(friction_weight(1.0, 2.0), 0.5);
        assert_eq!(friction_target(1.0, 2.0), Some(2.0));
        assert_eq!(friction_target(2.0, 2.0), None);
        assert_eq!(friction_target(3.0, 2.0), None);
        let near = friction_target(1.0 - 1e-9, 1.0).unwrap();
        assert!(near > 1e8);
    }

    #[test]
    fn cold_start_accuracy_query_under_dprovdb() {
        let mut e = engine(MechanismKind::DProvDb, 3.0, &[("a", 1)]);
        let out = e.handle_query(&acc_q("a", "x", 8, 0, 3, 40.0)).unwrap();
        let Status::Answered {
            variance,
            epsilon,
            charged_epsilon,
            ..
        } = out.status
        else {
            panic!("rejected: {out:?}")
        };
        assert!(variance <= 40.0);
        let expect =
            gauss::translate_vanilla(1.0, 10.0, DEFAULT_DELTA, DEFAULT_PRECISION, 3.0).unwrap();
        assert_eq!(epsilon, expect);
        assert_eq!(charged_epsilon, expect);
        let g = e.global(&"x".into()).unwrap();
        assert_eq!(g.epsilon(), expect);
        assert!(e.local(&"a".into(), &"x".into()).is_some());
    }

    #[test]
    fn paper_walkthrough_budget_mode() {
        let mut e = engine(MechanismKind::DProvDb, 5.0, &[("alice", 1), ("bob", 1)]);
        let x = ViewId::from("x");
        let charged = |o: &QueryOutcome| match o.status {
            Status::Answered {
                charged_epsilon, ..
            } => charged_epsilon,
            _ => panic!("rejected {o:?}"),
        };
        let c = charged(&e.handle_query(&budget_q("alice", "x", 8, 0.5)).unwrap());
        assert!((c - 0.5).abs() < 1e-12);
        let c = charged(&e.handle_query(&budget_q("bob", "x", 8, 0.3)).unwrap());
        assert!((c - 0.3).abs() < 1e-12);
        assert!((e.global(&x).unwrap().epsilon() - 0.5).abs() < 1e-12);
        let bob_local = e.local(&"bob".into(), &x).unwrap();
        let s = gauss::sigma_for(0.3, DEFAULT_DELTA, 1.0).unwrap();
        assert_eq!(bob_local.per_bin_variance, s * s);

        let c = charged(&e.handle_query(&budget_q("bob", "x", 8, 0.7)).unwrap());
        assert!((c - 0.4).abs() < 1e-12);
        assert!((e.global(&x).unwrap().epsilon() - 0.7).abs() < 1e-12);
        assert_eq!(e.global(&x).unwrap().lineage.len(), 2);

        let c = charged(&e.handle_query(&budget_q("alice", "x", 8, 0.6)).unwrap());
        assert!((c - 0.2).abs() < 1e-12);
        assert!((e.global(&x).unwrap().epsilon() - 0.7).abs() < 1e-12);
        assert!((e.local(&"alice".into(), &x).unwrap().epsilon() - 0.6).abs() < 1e-12);
        let t = e.table();
        assert!((t.entry(&"alice".into(), &x).unwrap().epsilon - 0.7).abs() < 1e-12);
        assert!((t.entry(&"bob".into(), &x).unwrap().epsilon - 0.7).abs() < 1e-12);
        assert!((t.column_usage(&x).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn repeated_accuracy_query_is_free_under_dprovdb() {
        let mut e = engine(MechanismKind::DProvDb, 3.0, &[("a", 1), ("b", 1)]);
        let q = acc_q("a", "x", 8, 2, 5, 30.0);
        let first = e.handle_query(&q).unwrap();
        assert!(first.is_answered());
        let second = e.handle_query(&q).unwrap();
        match second.status {
            Status::Answered {
                charged_epsilon, ..
            } => assert_eq!(charged_epsilon, 0.0),
            _ => panic!(),
        }
    }

    #[test]
    fn second_analyst_reuses_global() {
        let mut e = engine(MechanismKind::DProvDb, 3.0, &[("a", 1), ("b", 1)]);
        e.handle_query(&acc_q("a", "x", 8, 0, 7, 80.0)).unwrap();
        let before = e.consumed_budget();
        let out = e.handle_query(&acc_q("b", "x", 8, 0, 7, 80.0)).unwrap();
        assert!(out.is_answered());
        assert!((e.consumed_budget() - before).abs() < 1e-12);
    }

    #[test]
    fn chorus_depletes_single_budget() {
        let mut e = engine(MechanismKind::Chorus, 1.0, &[("a", 1), ("b", 4)]);
        let mut answered = 0;
        for i in 0..10 {
            let a = if i % 2 == 0 { "a" } else { "b" };
            if e.handle_query(&budget_q(a, "y", 4, 0.3))
                .unwrap()
                .is_answered()
            {
                answered += 1;
            }
        }
        assert_eq!(answered, 3);
        assert!(
            !e.handle_query(&budget_q("b", "x", 8, 0.05))
                .unwrap()
                .is_answered()
                || e.consumed_budget() <= 1.0
        );
    }

    #[test]
    fn static_mechanism_acceptance_predicate() {
        let mut e = engine(MechanismKind::SPrivateSql, 6.4, &[("a", 1)]);
        let v_static = e.global(&"x".into()).unwrap().per_bin_variance;
        let s = gauss::sigma_for(3.2, DEFAULT_DELTA, 1.0).unwrap();
        assert_eq!(v_static, s * s);
        for k in 1..=8 {
            for &v in &[0.1, 0.5, 1.0, 2.0, 5.0] {
                let out = e.handle_query(&acc_q("a", "x", 8, 0, k - 1, v)).unwrap();
                assert_eq!(out.is_answered(), k as f64 * v_static <= v, "k={k} v={v}");
            }
        }
    }

    #[test]
    fn rejection_leaves_state_unchanged() {
        let mut e = engine(MechanismKind::Vanilla, 0.5, &[("a", 1)]);
        let table = e.table().clone();
        let out = e.handle_query(&budget_q("a", "x", 8, 0.6)).unwrap();
        assert!(!out.is_answered());
        assert_eq!(
            e.table().entry(&"a".into(), &"x".into()).unwrap(),
            table.entry(&"a".into(), &"x".into()).unwrap()
        );
        assert_eq!(e.table().log().len(), 1);
    }

    #[test]
    fn unknown_references_are_errors() {
        let mut e = engine(MechanismKind::Vanilla, 1.0, &[("a", 1)]);
        assert!(matches!(
            e.handle_query(&budget_q("a", "z", 8, 0.1)),
            Err(Error::UnknownView(_))
        ));
        assert!(matches!(
            e.handle_query(&budget_q("q", "x", 8, 0.1)),
            Err(Error::UnknownAnalyst(_))
        ));
        assert!(matches!(
            e.handle_query(&budget_q("a", "x", 3, 0.1)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn delta_below_the_calibration_floor_is_refused() {
        let data = dataset();
        let views = vec![build_view(&data, &ViewSpec::over(&["x"])).unwrap()];
        let config = EngineConfig {
            delta: 1e-13,
            ..EngineConfig::default()
        };
        let analysts = vec![Analyst::new("a", 1).unwrap()];
        assert!(Engine::new(config, views, analysts, data.len()).is_err());
    }

    #[test]
    fn repeat_demands_are_clamped() {
        let mut e = engine(MechanismKind::Vanilla, 3.0, &[("a", 1)]);
        e.handle_query(&acc_q("a", "x", 8, 0, 1, 10.0)).unwrap();
        let out = e.handle_query(&acc_q("a", "x", 8, 0, 1, 50.0)).unwrap();
        assert_eq!(e.clamped_demands(), 1);
        match out.status {
            Status::Answered { variance, .. } => assert!(variance <= 10.0),
            _ => panic!(),
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let trace = |m| {
            let mut e = engine(m, 2.0, &[("a", 1), ("b", 3)]);
            (0..30)
                .map(|i| {
                    let a = if i % 3 == 0 { "a" } else { "b" };
                    let q = acc_q(a, "x", 8, i % 4, 4 + i % 4, 20.0 + i as f64);
                    serde_json::to_string(&e.handle_query(&q).unwrap()).unwrap()
                })
                .collect::<Vec<_>>()
        };
        for m in MechanismKind::ALL {
            assert_eq!(trace(m), trace(m));
        }
    }

    #[test]
    fn late_registration_rules() {
        let mut e = engine(MechanismKind::DProvDb, 1.0, &[("a", 1)]);
        assert!(e.add_analyst(Analyst::new("b", 2).unwrap()).is_err());
        let data = dataset();
        let views = vec![build_view(&data, &ViewSpec::over(&["x"])).unwrap()];
        let config = EngineConfig {
            rows: Some(RowConstraints::MaxNormalized {
                l_max: Some(10),
                tau: 1.0,
            }),
            ..EngineConfig::default()
        };
        let mut e = Engine::new(config, views, vec![], data.len()).unwrap();
        e.add_analyst(Analyst::new("b", 5).unwrap()).unwrap();
        assert!((e.table().row_cap(&"b".into()).unwrap() - 0.8).abs() < 1e-12);
        assert!(e.add_analyst(Analyst::new("b", 5).unwrap()).is_err());
    }
}
