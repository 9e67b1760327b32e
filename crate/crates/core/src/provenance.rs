//! The privacy provenance table: cumulative loss per (analyst, view), the
//! row/column/table caps, and the two admission checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Analyst, AnalystId, ViewId, MAX_PRIVILEGE};

/// Absolute slack when comparing a total against a cap, so that charges
/// landing on a cap up to rounding still pass.
pub const CAP_TOLERANCE: f64 = 1e-9;

fn within(total: f64, cap: f64) -> bool {
    total <= cap + CAP_TOLERANCE
}

fn check_budget(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

/// Row caps `l_i / sum(l) * psi`.
pub fn sum_normalized_caps(
    analysts: &[Analyst],
    table_cap: f64,
) -> Result<BTreeMap<AnalystId, f64>> {
    check_budget("table cap", table_cap)?;
    if analysts.is_empty() {
        return Err(Error::InvalidParameter(
            "no analysts to normalize over".into(),
        ));
    }
    let total: u32 = analysts.iter().map(|a| a.privilege).sum();
    Ok(analysts
        .iter()
        .map(|a| (a.id.clone(), a.privilege as f64 / total as f64 * table_cap))
        .collect())
}

/// Row cap `min(psi, tau * l / l_max * psi)`.
pub fn max_normalized_cap(privilege: u32, table_cap: f64, l_max: u32, tau: f64) -> Result<f64> {
    check_budget("table cap", table_cap)?;
    if !(tau.is_finite() && tau >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "expansion tau must be >= 1, got {tau}"
        )));
    }
    if l_max == 0 || l_max > MAX_PRIVILEGE {
        return Err(Error::InvalidParameter(format!(
            "l_max {l_max} outside [1, {MAX_PRIVILEGE}]"
        )));
    }
    if privilege == 0 || privilege > l_max {
        return Err(Error::InvalidParameter(format!(
            "privilege {privilege} outside [1, {l_max}]"
        )));
    }
    Ok(table_cap.min(tau * privilege as f64 / l_max as f64 * table_cap))
}

pub fn max_normalized_caps(
    analysts: &[Analyst],
    table_cap: f64,
    l_max: u32,
    tau: f64,
) -> Result<BTreeMap<AnalystId, f64>> {
    analysts
        .iter()
        .map(|a| {
            max_normalized_cap(a.privilege, table_cap, l_max, tau)
                .map_err(|_| Error::PrivilegeOutOfRange {
                    analyst: a.id.clone(),
                    privilege: a.privilege,
                    max: l_max,
                })
                .map(|c| (a.id.clone(), c))
        })
        .collect()
}

/// Every view may use the whole table budget.
pub fn water_filling_caps(views: &[ViewId], table_cap: f64) -> BTreeMap<ViewId, f64> {
    views.iter().map(|v| (v.clone(), table_cap)).collect()
}

/// Static split of the table budget proportional to view sensitivities.
pub fn static_view_caps(views: &[(ViewId, f64)], table_cap: f64) -> Result<BTreeMap<ViewId, f64>> {
    let total: f64 = views.iter().map(|(_, s)| s).sum();
    if views.is_empty() || !(total > 0.0) {
        return Err(Error::InvalidParameter(
            "static split needs views with positive sensitivity".into(),
        ));
    }
    Ok(views
        .iter()
        .map(|(v, s)| (v.clone(), s / total * table_cap))
        .collect())
}

/// How a view's column is charged against its cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnAccounting {
    /// Independent releases: the column costs the sum of its entries.
    Sum,
    /// Correlated releases from one global synopsis: the column costs the
    /// global synopsis' cumulative epsilon, which bounds every entry.
    Max,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Row {
    privilege: u32,
    cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Column {
    cap: f64,
    /// Cumulative epsilon of the view's global synopsis (max accounting).
    global_epsilon: f64,
    /// Delta of every release drawn from the view.
    delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    Row { total: f64, cap: f64 },
    Column { total: f64, cap: f64 },
    Table { total: f64, cap: f64 },
    DeltaCap { total: f64, cap: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, total, cap) = match self {
            Violation::Row { total, cap } => ("row", total, cap),
            Violation::Column { total, cap } => ("column", total, cap),
            Violation::Table { total, cap } => ("table", total, cap),
            Violation::DeltaCap { total, cap } => ("delta", total, cap),
        };
        write!(f, "{name} constraint: {total:.6} would exceed {cap:.6}")
    }
}

impl Violation {
    pub fn label(&self) -> &'static str {
        match self {
            Violation::Row { .. } => "row",
            Violation::Column { .. } => "column",
            Violation::Table { .. } => "table",
            Violation::DeltaCap { .. } => "delta",
        }
    }
}

/// An admissible charge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub analyst_epsilon: f64,
    /// Cumulative global epsilon of the view after the release.
    pub view_epsilon: f64,
    /// Delta spent touching the data.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Charge {
        seq: u64,
        analyst: AnalystId,
        view: ViewId,
        charge: Charge,
    },
    Release {
        seq: u64,
        view: ViewId,
        epsilon: f64,
        delta: f64,
    },
    Reject {
        seq: u64,
        analyst: AnalystId,
        view: ViewId,
        requested: f64,
        violation: Violation,
    },
}

impl fmt::Display for AuditEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditEvent::Charge {
                seq,
                analyst,
                view,
                charge,
            } => write!(
                f,
                "#{seq} charge {analyst} on {view}: eps={:.6} view_eps={:.6} delta={:e}",
                charge.analyst_epsilon, charge.view_epsilon, charge.delta
            ),
            AuditEvent::Release {
                seq,
                view,
                epsilon,
                delta,
            } => write!(f, "#{seq} release {view}: eps={epsilon:.6} delta={delta:e}"),
            AuditEvent::Reject {
                seq,
                analyst,
                view,
                requested,
                violation,
            } => write!(
                f,
                "#{seq} reject {analyst} on {view} (eps={requested:.6}): {violation}"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceTable {
    accounting: ColumnAccounting,
    table_cap: f64,
    delta_cap: f64,
    delta_spent: f64,
    rows: BTreeMap<AnalystId, Row>,
    columns: BTreeMap<ViewId, Column>,
    entries: BTreeMap<AnalystId, BTreeMap<ViewId, Entry>>,
    log: Vec<AuditEvent>,
    #[serde(skip)]
    seq: u64,
}

impl ProvenanceTable {
    pub fn new(accounting: ColumnAccounting, table_cap: f64, delta_cap: f64) -> Result<Self> {
        check_budget("table cap", table_cap)?;
        check_budget("delta cap", delta_cap)?;
        Ok(Self {
            accounting,
            table_cap,
            delta_cap,
            delta_spent: 0.0,
            rows: BTreeMap::new(),
            columns: BTreeMap::new(),
            entries: BTreeMap::new(),
            log: Vec::new(),
            seq: 0,
        })
    }

    pub fn accounting(&self) -> ColumnAccounting {
        self.accounting
    }

    pub fn table_cap(&self) -> f64 {
        self.table_cap
    }

    pub fn delta_cap(&self) -> f64 {
        self.delta_cap
    }

    pub fn delta_spent(&self) -> f64 {
        self.delta_spent
    }

    pub fn add_analyst(&mut self, analyst: &Analyst, cap: f64) -> Result<()> {
        if self.rows.contains_key(&analyst.id) {
            return Err(Error::DuplicateAnalyst(analyst.id.clone()));
        }
        if !(cap >= 0.0 && cap <= self.table_cap + CAP_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "row cap {cap} must lie in [0, {}]",
                self.table_cap
            )));
        }
        self.rows.insert(
            analyst.id.clone(),
            Row {
                privilege: analyst.privilege,
                cap,
            },
        );
        self.entries.entry(analyst.id.clone()).or_default();
        Ok(())
    }

    pub fn add_view(&mut self, view: ViewId, cap: f64) -> Result<()> {
        if !(cap >= 0.0 && cap <= self.table_cap + CAP_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "column cap {cap} must lie in [0, {}]",
                self.table_cap
            )));
        }
        self.columns.entry(view).or_insert(Column {
            cap,
            global_epsilon: 0.0,
            delta: 0.0,
        });
        Ok(())
    }

    pub fn analysts(&self) -> impl Iterator<Item = &AnalystId> {
        self.rows.keys()
    }

    pub fn views(&self) -> impl Iterator<Item = &ViewId> {
        self.columns.keys()
    }

    fn row(&self, a: &AnalystId) -> Result<&Row> {
        self.rows
            .get(a)
            .ok_or_else(|| Error::UnknownAnalyst(a.clone()))
    }

    fn column(&self, v: &ViewId) -> Result<&Column> {
        self.columns
            .get(v)
            .ok_or_else(|| Error::UnknownView(v.clone()))
    }

    pub fn row_cap(&self, a: &AnalystId) -> Result<f64> {
        Ok(self.row(a)?.cap)
    }

    pub fn privilege(&self, a: &AnalystId) -> Result<u32> {
        Ok(self.row(a)?.privilege)
    }

    pub fn column_cap(&self, v: &ViewId) -> Result<f64> {
        Ok(self.column(v)?.cap)
    }

    pub fn entry(&self, a: &AnalystId, v: &ViewId) -> Result<Entry> {
        self.row(a)?;
        self.column(v)?;
        Ok(self.entries[a].get(v).copied().unwrap_or_default())
    }

    pub fn row_total(&self, a: &AnalystId) -> Result<f64> {
        self.row(a)?;
        Ok(self.entries[a].values().map(|e| e.epsilon).sum())
    }

    pub fn row_delta(&self, a: &AnalystId) -> Result<f64> {
        self.row(a)?;
        Ok(self.entries[a].values().map(|e| e.delta).sum())
    }

    pub fn column_sum(&self, v: &ViewId) -> Result<f64> {
        self.column(v)?;
        Ok(self
            .entries
            .values()
            .filter_map(|r| r.get(v))
            .map(|e| e.epsilon)
            .sum())
    }

    pub fn column_max(&self, v: &ViewId) -> Result<f64> {
        self.column(v)?;
        Ok(self
            .entries
            .values()
            .filter_map(|r| r.get(v))
            .map(|e| e.epsilon)
            .fold(0.0, f64::max))
    }

    /// Cumulative epsilon of the view's global synopsis.
    pub fn view_epsilon(&self, v: &ViewId) -> Result<f64> {
        Ok(self.column(v)?.global_epsilon)
    }

    /// What the column costs against its cap under this table's accounting.
    pub fn column_usage(&self, v: &ViewId) -> Result<f64> {
        match self.accounting {
            ColumnAccounting::Sum => self.column_sum(v),
            ColumnAccounting::Max => Ok(self.column_max(v)?.max(self.view_epsilon(v)?)),
        }
    }

    /// Total table usage: the sum of column usages.
    pub fn table_total(&self) -> f64 {
        self.columns
            .keys()
            .map(|v| self.column_usage(v).unwrap_or(0.0))
            .sum()
    }

    /// Sum of per-view column maxima; the collusion bound.
    pub fn sum_of_column_max(&self) -> f64 {
        self.columns
            .keys()
            .map(|v| self.column_max(v).unwrap_or(0.0))
            .sum()
    }

    fn check_delta(&self, delta: f64) -> Option<Violation> {
        let total = self.delta_spent + delta;
        (total > self.delta_cap * (1.0 + 1e-12)).then_some(Violation::DeltaCap {
            total,
            cap: self.delta_cap,
        })
    }

    /// Admission check for an independent release at `epsilon`.
    pub fn check_vanilla(
        &self,
        a: &AnalystId,
        v: &ViewId,
        epsilon: f64,
        delta: f64,
    ) -> Result<std::result::Result<Charge, Violation>> {
        let row = self.row(a)?;
        let col = self.column(v)?;
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "charge {epsilon} must be non-negative"
            )));
        }
        let table = self.table_total() + epsilon;
        if !within(table, self.table_cap) {
            return Ok(Err(Violation::Table {
                total: table,
                cap: self.table_cap,
            }));
        }
        let row_total = self.row_total(a)? + epsilon;
        if !within(row_total, row.cap) {
            return Ok(Err(Violation::Row {
                total: row_total,
                cap: row.cap,
            }));
        }
        let col_total = self.column_usage(v)? + epsilon;
        if !within(col_total, col.cap) {
            return Ok(Err(Violation::Column {
                total: col_total,
                cap: col.cap,
            }));
        }
        if let Some(viol) = self.check_delta(delta) {
            return Ok(Err(viol));
        }
        Ok(Ok(Charge {
            analyst_epsilon: epsilon,
            view_epsilon: col.global_epsilon,
            delta,
        }))
    }

    /// Admission check for a local release at `epsilon` derived from the
    /// view's global synopsis, which must reach `required_global` first.
    ///
    /// The analyst is charged `min(required_global, P + epsilon) - P`.
    /// `delta` is spent only if the global synopsis has to grow.
    pub fn check_additive(
        &self,
        a: &AnalystId,
        v: &ViewId,
        epsilon: f64,
        required_global: f64,
        delta: f64,
    ) -> Result<std::result::Result<Charge, Violation>> {
        let row = self.row(a)?;
        let col = self.column(v)?;
        if !(epsilon >= 0.0 && required_global >= 0.0) {
            return Err(Error::InvalidParameter(
                "charges must be non-negative".into(),
            ));
        }
        let required_global = required_global.max(col.global_epsilon);
        let p = self.entry(a, v)?.epsilon;
        let charge = ((required_global).min(p + epsilon) - p).max(0.0);
        let grows = required_global > col.global_epsilon;

        let usage_before = self.column_max(v)?.max(col.global_epsilon);
        let usage_after = self.column_max(v)?.max(p + charge).max(required_global);
        if !within(usage_after, col.cap) {
            return Ok(Err(Violation::Column {
                total: usage_after,
                cap: col.cap,
            }));
        }
        let table = self.table_total() - usage_before + usage_after;
        if !within(table, self.table_cap) {
            return Ok(Err(Violation::Table {
                total: table,
                cap: self.table_cap,
            }));
        }
        let row_total = self.row_total(a)? + charge;
        if !within(row_total, row.cap) {
            return Ok(Err(Violation::Row {
                total: row_total,
                cap: row.cap,
            }));
        }
        let spent = if grows { delta } else { 0.0 };
        if let Some(viol) = self.check_delta(spent) {
            return Ok(Err(viol));
        }
        Ok(Ok(Charge {
            analyst_epsilon: charge,
            view_epsilon: required_global,
            delta: spent,
        }))
    }

    /// Applies an admitted charge and logs it.
    pub fn apply(&mut self, a: &AnalystId, v: &ViewId, charge: Charge) -> Result<()> {
        self.row(a)?;
        self.column(v)?;
        let accounting = self.accounting;
        let col = self.columns.get_mut(v).expect("checked");
        col.global_epsilon = col.global_epsilon.max(charge.view_epsilon);
        col.delta += charge.delta;
        let view_delta_entry = charge.delta;
        let e = self
            .entries
            .get_mut(a)
            .expect("checked")
            .entry(v.clone())
            .or_default();
        e.epsilon += charge.analyst_epsilon;
        match accounting {
            ColumnAccounting::Sum => e.delta += view_delta_entry,
            ColumnAccounting::Max => {}
        }
        self.delta_spent += charge.delta;
        if accounting == ColumnAccounting::Max {
            // A local release inherits the delta of every global release
            // of the view so far.
            let view_delta = self.view_delta(v);
            let e = self
                .entries
                .get_mut(a)
                .expect("checked")
                .get_mut(v)
                .expect("inserted");
            e.delta = view_delta;
        }
        self.seq += 1;
        self.log.push(AuditEvent::Charge {
            seq: self.seq,
            analyst: a.clone(),
            view: v.clone(),
            charge,
        });
        Ok(())
    }

    fn view_delta(&self, v: &ViewId) -> f64 {
        self.columns.get(v).map_or(0.0, |c| c.delta)
    }

    /// Records a rejection; the table itself is left untouched.
    pub fn record_rejection(
        &mut self,
        a: &AnalystId,
        v: &ViewId,
        requested: f64,
        violation: Violation,
    ) {
        self.seq += 1;
        self.log.push(AuditEvent::Reject {
            seq: self.seq,
            analyst: a.clone(),
            view: v.clone(),
            requested,
            violation,
        });
    }

    /// Spends delta on a release that no analyst is charged for, such as a
    /// static synopsis built up front.
    pub fn charge_view(&mut self, v: &ViewId, epsilon: f64, delta: f64) -> Result<()> {
        let col = self
            .columns
            .get_mut(v)
            .ok_or_else(|| Error::UnknownView(v.clone()))?;
        col.global_epsilon += epsilon;
        col.delta += delta;
        self.delta_spent += delta;
        self.seq += 1;
        self.log.push(AuditEvent::Release {
            seq: self.seq,
            view: v.clone(),
            epsilon,
            delta,
        });
        Ok(())
    }

    pub fn log(&self) -> &[AuditEvent] {
        &self.log
    }

    pub fn audit_lines(&self) -> Vec<String> {
        self.log.iter().map(ToString::to_string).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut t: Self = serde_json::from_str(s)?;
        t.seq = t.log.len() as u64;
        Ok(t)
    }

    /// Replays the charge log from an empty table and reports every point
    /// where a constraint was exceeded.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut entries: HashMap<(&AnalystId, &ViewId), f64> = HashMap::new();
        let mut global: HashMap<&ViewId, f64> = HashMap::new();
        let mut delta = 0.0;
        for event in &self.log {
            let (seq, analyst, view, charge) = match event {
                AuditEvent::Charge {
                    seq,
                    analyst,
                    view,
                    charge,
                } => (seq, analyst, view, *charge),
                AuditEvent::Release {
                    seq,
                    view,
                    epsilon,
                    delta: d,
                } => {
                    *global.entry(view).or_default() += epsilon;
                    delta += d;
                    if delta > self.delta_cap * (1.0 + 1e-12) {
                        problems.push(format!("#{seq}: delta {delta} exceeds {}", self.delta_cap));
                    }
                    let g: f64 = global.values().sum();
                    if !within(g, self.table_cap) {
                        problems.push(format!(
                            "#{seq}: releases total {g} exceed {}",
                            self.table_cap
                        ));
                    }
                    continue;
                }
                AuditEvent::Reject { .. } => continue,
            };
            if charge.analyst_epsilon < 0.0 || charge.delta < 0.0 {
                problems.push(format!("#{seq}: negative charge"));
            }
            *entries.entry((analyst, view)).or_default() += charge.analyst_epsilon;
            let g = global.entry(view).or_default();
            *g = g.max(charge.view_epsilon);
            delta += charge.delta;

            let usage = |v: &ViewId| -> f64 {
                let col = entries
                    .iter()
                    .filter(|((_, w), _)| *w == v)
                    .map(|(_, e)| *e);
                match self.accounting {
                    ColumnAccounting::Sum => col.sum(),
                    ColumnAccounting::Max => {
                        col.fold(global.get(v).copied().unwrap_or(0.0), f64::max)
                    }
                }
            };
            let row: f64 = entries
                .iter()
                .filter(|((a, _), _)| *a == analyst)
                .map(|(_, e)| e)
                .sum();
            if let Some(r) = self.rows.get(analyst) {
                if !within(row, r.cap) {
                    problems.push(format!("#{seq}: row {analyst} at {row} exceeds {}", r.cap));
                }
            }
            if let Some(c) = self.columns.get(view) {
                let u = usage(view);
                if !within(u, c.cap) {
                    problems.push(format!("#{seq}: column {view} at {u} exceeds {}", c.cap));
                }
            }
            let touched: std::collections::BTreeSet<&ViewId> = entries
                .keys()
                .map(|(_, v)| *v)
                .chain(global.keys().copied())
                .collect();
            let table: f64 = touched.iter().map(|v| usage(v)).sum();
            if !within(table, self.table_cap) {
                problems.push(format!(
                    "#{seq}: table at {table} exceeds {}",
                    self.table_cap
                ));
            }
            let colluding: f64 = touched
                .iter()
                .map(|v| {
                    entries
                        .iter()
                        .filter(|((_, w), _)| w == v)
                        .map(|(_, e)| *e)
                        .fold(0.0, f64::max)
                })
                .sum();
            if !within(colluding, self.table_cap) {
                problems.push(format!(
                    "#{seq}: column maxima sum {colluding} exceeds {}",
                    self.table_cap
                ));
            }
            if delta > self.delta_cap * (1.0 + 1e-12) {
                problems.push(format!("#{seq}: delta {delta} exceeds {}", self.delta_cap));
            }
        }
        problems
    }
}

/// Who may collude with whom; analysts in one connected component are
/// assumed to pool their outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionGraph {
    nodes: Vec<AnalystId>,
    edges: Vec<(AnalystId, AnalystId)>,
    t: usize,
}

impl CorruptionGraph {
    pub fn new(
        nodes: Vec<AnalystId>,
        edges: Vec<(AnalystId, AnalystId)>,
        t: usize,
    ) -> Result<Self> {
        let g = Self { nodes, edges, t };
        for comp in g.components()? {
            if comp.len() >= t {
                return Err(Error::CorruptionBound {
                    size: comp.len(),
                    t,
                });
            }
        }
        Ok(g)
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn components(&self) -> Result<Vec<Vec<AnalystId>>> {
        let index: BTreeMap<&AnalystId, usize> =
            self.nodes.iter().enumerate().map(|(i, a)| (a, i)).collect();
        if index.len() != self.nodes.len() {
            let mut seen = std::collections::BTreeSet::new();
            let dup = self
                .nodes
                .iter()
                .find(|a| !seen.insert(*a))
                .expect("duplicate exists");
            return Err(Error::DuplicateAnalyst(dup.clone()));
        }
        let mut uf = UnionFind::<usize>::new(self.nodes.len());
        for (a, b) in &self.edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::UnknownAnalyst(a.clone()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::UnknownAnalyst(b.clone()))?;
            uf.union(ia, ib);
        }
        let mut groups: BTreeMap<usize, Vec<AnalystId>> = BTreeMap::new();
        for (i, a) in self.nodes.iter().enumerate() {
            groups.entry(uf.find(i)).or_default().push(a.clone());
        }
        let mut out: Vec<Vec<AnalystId>> = groups.into_values().collect();
        out.sort();
        Ok(out)
    }

    /// Total budget assignable across analysts: one table budget per
    /// component.
    pub fn assignable_budget(&self, table_cap: f64) -> Result<f64> {
        Ok(self.components()?.len() as f64 * table_cap)
    }

    /// Row caps that give each component the full table budget, split
    /// inside the component in proportion to privilege.
    pub fn row_caps(
        &self,
        analysts: &[Analyst],
        table_cap: f64,
    ) -> Result<BTreeMap<AnalystId, f64>> {
        let by_id: BTreeMap<&AnalystId, &Analyst> = analysts.iter().map(|a| (&a.id, a)).collect();
        let mut caps = BTreeMap::new();
        for comp in self.components()? {
            let members = comp
                .iter()
                .map(|id| {
                    by_id
                        .get(id)
                        .map(|a| (*a).clone())
                        .ok_or_else(|| Error::UnknownAnalyst(id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            caps.extend(sum_normalized_caps(&members, table_cap)?);
        }
        Ok(caps)
    }
}
