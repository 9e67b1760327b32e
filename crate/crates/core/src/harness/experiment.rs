//! Experiment grids: a TOML spec expands into cells (mechanism, table cap,
//! delta, tau, analyst count, seed), each run on its own engine.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::CompositionMode;
use crate::engine::{Engine, EngineConfig, MechanismKind, RowConstraints, DEFAULT_PRECISION};
use crate::error::{Error, Result};
use crate::harness::metrics::{QueryTrace, RunReport, DEFAULT_ERROR_FLOOR};
use crate::harness::synthetic::{adult_like, SyntheticConfig};
use crate::harness::workload::{generate_rrq, BfsConfig, BfsTask, BfsVisit, RrqConfig};
use crate::io::{default_views, load_dataset};
use crate::model::{
    build_view, evaluate_query_true, Analyst, AnalystId, Dataset, HistogramView, LinearQuery,
    ViewSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticConfig),
    /// Binary dataset written by `ingest`; relative paths resolve against
    /// the spec file's directory.
    File {
        path: PathBuf,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    Rrq(RrqConfig),
    Bfs(BfsConfig),
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec::Rrq(RrqConfig::default())
    }
}

/// Row cap rule of every cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowsSpec {
    /// Each mechanism's own default.
    #[default]
    Default,
    Sum,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub seeds: Vec<u64>,
    pub mechanisms: Vec<MechanismKind>,
    pub table_caps: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Only affects max-normalized rows.
    pub taus: Vec<f64>,
    pub analyst_counts: Vec<usize>,
    /// Privileges assigned to analysts in order; a cell with `n` analysts
    /// uses the first `n`.
    pub privileges: Vec<u32>,
    pub rows: RowsSpec,
    pub l_max: Option<u32>,
    pub delta_cap: Option<f64>,
    pub precision: f64,
    pub error_floor: f64,
    pub ledger: CompositionMode,
    pub dataset: DatasetSpec,
    /// View declarations; empty means one view per attribute.
    pub views: Vec<ViewSpec>,
    pub workload: WorkloadSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: vec![0, 1, 2, 3],
            mechanisms: MechanismKind::ALL.to_vec(),
            table_caps: vec![1.6],
            deltas: vec![1e-9],
            taus: vec![1.0],
            analyst_counts: vec![2],
            privileges: vec![1, 4, 2, 6, 3, 5, 7, 8, 9, 10],
            rows: RowsSpec::Default,
            l_max: None,
            delta_cap: None,
            precision: DEFAULT_PRECISION,
            error_floor: DEFAULT_ERROR_FLOOR,
            ledger: CompositionMode::Basic,
            dataset: DatasetSpec::default(),
            views: Vec::new(),
            workload: WorkloadSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec, resolving a relative dataset path against the file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml(&fs::read_to_string(path)?)?;
        if let DatasetSpec::File { path: p } = &mut spec.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.seeds.is_empty()
            || self.mechanisms.is_empty()
            || self.table_caps.is_empty()
            || self.deltas.is_empty()
            || self.taus.is_empty()
            || self.analyst_counts.is_empty()
        {
            return bad("every grid axis needs at least one value".into());
        }
        if let Some(&n) = self
            .analyst_counts
            .iter()
            .find(|&&n| n == 0 || n > self.privileges.len())
        {
            return bad(format!(
                "{n} analysts but {} privileges declared",
                self.privileges.len()
            ));
        }
        if let WorkloadSpec::Bfs(b) = &self.workload {
            if b.roots.is_empty() || b.roots.iter().any(Vec::is_empty) {
                return bad("bfs needs at least one non-empty root".into());
            }
        }
        if !(self.error_floor > 0.0) {
            return bad("error_floor must be positive".into());
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mechanism in &self.mechanisms {
            for &table_cap in &self.table_caps {
                for &delta in &self.deltas {
                    for &tau in &self.taus {
                        for &analysts in &self.analyst_counts {
                            for &seed in &self.seeds {
                                out.push(Cell {
                                    mechanism,
                                    table_cap,
                                    delta,
                                    tau,
                                    analysts,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn engine_config(&self, cell: &Cell) -> EngineConfig {
        let rows = match self.rows {
            RowsSpec::Default => RowConstraints::default_for(cell.mechanism),
            RowsSpec::Sum => RowConstraints::SumNormalized,
            RowsSpec::Max => RowConstraints::MaxNormalized {
                l_max: None,
                tau: 1.0,
            },
        };
        let rows = match rows {
            RowConstraints::MaxNormalized { .. } => RowConstraints::MaxNormalized {
                l_max: self.l_max,
                tau: cell.tau,
            },
            other => other,
        };
        EngineConfig {
            mechanism: cell.mechanism,
            table_cap: cell.table_cap,
            delta: cell.delta,
            delta_cap: self.delta_cap,
            precision: self.precision,
            rows: Some(rows),
            ledger: self.ledger.clone(),
            seed: cell.seed ^ 0x9e37_79b9_7f4a_7c15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mechanism: MechanismKind,
    pub table_cap: f64,
    pub delta: f64,
    pub tau: f64,
    pub analysts: usize,
    pub seed: u64,
}

impl Cell {
    /// File-name-safe identifier.
    pub fn key(&self) -> String {
        format!(
            "{}_psi{}_delta{:e}_tau{}_n{}_s{}",
            self.mechanism, self.table_cap, self.delta, self.tau, self.analysts, self.seed
        )
    }
}

/// Dataset and materialized views shared by every cell.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: Dataset,
    pub views: Vec<HistogramView>,
}

impl Prepared {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        let dataset = match &spec.dataset {
            DatasetSpec::Synthetic(cfg) => adult_like(cfg)?,
            DatasetSpec::File { path } => load_dataset(path)?,
        };
        Self::from_dataset(spec, dataset)
    }

    pub fn from_dataset(spec: &ExperimentSpec, dataset: Dataset) -> Result<Self> {
        let mut specs = if spec.views.is_empty() {
            default_views(dataset.schema().iter().map(|a| a.name()))
        } else {
            spec.views.clone()
        };
        if let WorkloadSpec::Bfs(b) = &spec.workload {
            for root in &b.roots {
                let needed = root_view(root);
                if !specs.iter().any(|s| s.id == needed.id) {
                    specs.push(needed);
                }
            }
        }
        let views = specs
            .iter()
            .map(|s| build_view(&dataset, s))
            .collect::<Result<_>>()?;
        Ok(Self { dataset, views })
    }
}

fn root_view(root: &[String]) -> ViewSpec {
    let names: Vec<&str> = root.iter().map(String::as_str).collect();
    ViewSpec::over(&names)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub report: RunReport,
    pub traces: Vec<QueryTrace>,
    pub bfs: Vec<BfsVisit>,
    pub partial_tasks: usize,
}

fn analysts_for(spec: &ExperimentSpec, n: usize) -> Result<Vec<Analyst>> {
    spec.privileges[..n]
        .iter()
        .enumerate()
        .map(|(i, &l)| Analyst::new(format!("analyst{i}"), l))
        .collect()
}

fn submit(
    engine: &mut Engine,
    q: &LinearQuery,
    index: usize,
    floor: f64,
) -> Result<(QueryTrace, crate::engine::QueryOutcome)> {
    let view = engine
        .view(&q.view_id)
        .ok_or_else(|| Error::UnknownView(q.view_id.clone()))?;
    let truth = evaluate_query_true(view, q)?;
    let start = Instant::now();
    let outcome = engine.handle_query(q)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e6;
    let trace = QueryTrace::new(
        index,
        q.demand,
        truth,
        &outcome,
        engine.consumed_budget(),
        floor,
        elapsed,
    );
    Ok((trace, outcome))
}

pub fn run_cell(spec: &ExperimentSpec, prepared: &Prepared, cell: &Cell) -> Result<CellResult> {
    let analysts = analysts_for(spec, cell.analysts)?;
    let ids: Vec<AnalystId> = analysts.iter().map(|a| a.id.clone()).collect();
    let mut engine = Engine::new(
        spec.engine_config(cell),
        prepared.views.clone(),
        analysts,
        prepared.dataset.len(),
    )?;
    let mut traces = Vec::new();
    let mut visits = Vec::new();
    let mut partial_tasks = 0;
    match &spec.workload {
        WorkloadSpec::Rrq(cfg) => {
            let queries = generate_rrq(cfg, prepared.dataset.schema(), &ids, cell.seed)?;
            for (i, q) in queries.iter().enumerate() {
                traces.push(submit(&mut engine, q, i, spec.error_floor)?.0);
            }
        }
        WorkloadSpec::Bfs(cfg) => {
            let views = cfg
                .roots
                .iter()
                .map(|root| {
                    let id = root_view(root).id;
                    engine.view(&id).cloned().ok_or(Error::UnknownView(id))
                })
                .collect::<Result<Vec<_>>>()?;
            // Each analyst works through the task sequence; analysts take
            // turns one query at a time.
            let mut queues: Vec<(usize, BfsTask)> = ids
                .iter()
                .map(|a| Ok((0, BfsTask::new(cfg, &views[0], a.clone())?)))
                .collect::<Result<_>>()?;
            let mut done = vec![false; ids.len()];
            while done.iter().any(|d| !d) {
                for (i, (k, task)) in queues.iter_mut().enumerate() {
                    if done[i] {
                        continue;
                    }
                    let q = loop {
                        if let Some(q) = task.next_query()? {
                            break Some(q);
                        }
                        partial_tasks += usize::from(task.is_partial());
                        visits.extend(task.visits().iter().cloned());
                        *k += 1;
                        if *k == views.len() {
                            break None;
                        }
                        *task = BfsTask::new(cfg, &views[*k], ids[i].clone())?;
                    };
                    match q {
                        Some(q) => {
                            let (trace, outcome) =
                                submit(&mut engine, &q, traces.len(), spec.error_floor)?;
                            task.observe(&outcome, engine.consumed_budget())?;
                            traces.push(trace);
                        }
                        None => done[i] = true,
                    }
                }
            }
        }
    }
    let report = RunReport::summarize(&engine, &traces)?;
    Ok(CellResult {
        cell: *cell,
        report,
        traces,
        bfs: visits,
        partial_tasks,
    })
}

/// Runs every cell, in parallel across cells.
pub fn run_experiment(spec: &ExperimentSpec, prepared: &Prepared) -> Result<Vec<CellResult>> {
    spec.validate()?;
    spec.cells()
        .par_iter()
        .map(|c| run_cell(spec, prepared, c))
        .collect()
}

/// Flat per-cell row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub mechanism: MechanismKind,
    pub table_cap: f64,
    pub delta: f64,
    pub tau: f64,
    pub analysts: usize,
    pub seed: u64,
    pub submitted: u64,
    pub answered: u64,
    pub rejected: u64,
    pub dcfg: f64,
    pub ndcfg: f64,
    pub consumed_budget: f64,
    pub delta_spent: f64,
    pub mean_relative_error: Option<f64>,
    pub accuracy_violations: u64,
    pub clamped_demands: u64,
    pub partial_tasks: usize,
    pub runtime_total_ms: f64,
    pub runtime_mean_ms: f64,
}

impl SummaryRow {
    pub fn new(experiment: &str, r: &CellResult) -> Self {
        let c = &r.cell;
        let p = &r.report;
        Self {
            experiment: experiment.to_owned(),
            mechanism: c.mechanism,
            table_cap: c.table_cap,
            delta: c.delta,
            tau: c.tau,
            analysts: c.analysts,
            seed: c.seed,
            submitted: p.submitted,
            answered: p.answered,
            rejected: p.rejected,
            dcfg: p.dcfg,
            ndcfg: p.ndcfg,
            consumed_budget: p.consumed_budget,
            delta_spent: p.delta_spent,
            mean_relative_error: p.mean_relative_error,
            accuracy_violations: p.accuracy_violations,
            clamped_demands: p.clamped_demands,
            partial_tasks: r.partial_tasks,
            runtime_total_ms: p.runtime_total_ms,
            runtime_mean_ms: p.runtime_mean_ms,
        }
    }
}

/// Per-analyst row of `analysts.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalystRow {
    pub cell: String,
    pub analyst: AnalystId,
    pub privilege: u32,
    pub submitted: u64,
    pub answered: u64,
    pub rejected: u64,
    pub consumed: f64,
    pub row_cap: f64,
}

/// Row of `curves.csv`: cumulative budget after each query of a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub cell: String,
    pub mechanism: MechanismKind,
    pub seed: u64,
    pub index: usize,
    pub analyst: AnalystId,
    pub answered: bool,
    pub cumulative_budget: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary.csv`, `summary.json`, `analysts.csv`, `curves.csv` and
/// one `traces/<cell>.jsonl` per cell.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, results: &[CellResult]) -> Result<()> {
    fs::create_dir_all(dir.join("traces"))?;
    let summary: Vec<SummaryRow> = results
        .iter()
        .map(|r| SummaryRow::new(&spec.name, r))
        .collect();
    write_rows(&dir.join("summary.csv"), &summary)?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    write_rows(
        &dir.join("analysts.csv"),
        results.iter().flat_map(|r| {
            let key = r.cell.key();
            r.report.analysts.iter().map(move |(a, s)| AnalystRow {
                cell: key.clone(),
                analyst: a.clone(),
                privilege: s.privilege,
                submitted: s.submitted,
                answered: s.answered,
                rejected: s.rejected,
                consumed: s.consumed,
                row_cap: s.row_cap,
            })
        }),
    )?;
    write_rows(&dir.join("curves.csv"), results.iter().flat_map(curve_rows))?;
    for r in results {
        let mut f = std::io::BufWriter::new(fs::File::create(
            dir.join("traces").join(format!("{}.jsonl", r.cell.key())),
        )?);
        writeln!(f, "{}", serde_json::to_string(&r.cell)?)?;
        for t in &r.traces {
            writeln!(f, "{}", serde_json::to_string(t)?)?;
        }
        f.flush()?;
    }
    Ok(())
}

pub fn curve_rows(r: &CellResult) -> impl Iterator<Item = CurveRow> + '_ {
    let key = r.cell.key();
    r.traces.iter().map(move |t| CurveRow {
        cell: key.clone(),
        mechanism: r.cell.mechanism,
        seed: r.cell.seed,
        index: t.index,
        analyst: t.analyst.clone(),
        answered: t.answered(),
        cumulative_budget: t.cumulative_budget,
    })
}

/// Reads one trace file written by [`write_outputs`].
pub fn read_trace(path: &Path) -> Result<(Cell, Vec<QueryTrace>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let cell: Cell = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?,
    )?;
    let traces = lines
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()?;
    Ok((cell, traces))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Mean over seeds of one (mechanism, table cap, delta, tau, analysts)
/// group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub mechanism: MechanismKind,
    pub table_cap: f64,
    pub delta: f64,
    pub tau: f64,
    pub analysts: usize,
    pub seeds: usize,
    pub answered_mean: f64,
    pub answered_sd: f64,
    pub answered_min: u64,
    pub answered_max: u64,
    pub ndcfg_mean: f64,
    pub consumed_budget_mean: f64,
    pub mean_relative_error: Option<f64>,
    pub runtime_total_ms_mean: f64,
    pub runtime_mean_ms_mean: f64,
}

pub fn aggregate(rows: &[SummaryRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<(AggregateKey, Vec<&SummaryRow>)> = Vec::new();
    for r in rows {
        let key = AggregateKey::of(r);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(_, g)| {
            let n = g.len() as f64;
            let mean = |f: &dyn Fn(&SummaryRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            let answered_mean = mean(&|r| r.answered as f64);
            let var = g
                .iter()
                .map(|r| (r.answered as f64 - answered_mean).powi(2))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            let errs: Vec<f64> = g.iter().filter_map(|r| r.mean_relative_error).collect();
            let first = g[0];
            AggregateRow {
                experiment: first.experiment.clone(),
                mechanism: first.mechanism,
                table_cap: first.table_cap,
                delta: first.delta,
                tau: first.tau,
                analysts: first.analysts,
                seeds: g.len(),
                answered_mean,
                answered_sd: var.sqrt(),
                answered_min: g.iter().map(|r| r.answered).min().unwrap_or(0),
                answered_max: g.iter().map(|r| r.answered).max().unwrap_or(0),
                ndcfg_mean: mean(&|r| r.ndcfg),
                consumed_budget_mean: mean(&|r| r.consumed_budget),
                mean_relative_error: (!errs.is_empty())
                    .then(|| errs.iter().sum::<f64>() / errs.len() as f64),
                runtime_total_ms_mean: mean(&|r| r.runtime_total_ms),
                runtime_mean_ms_mean: mean(&|r| r.runtime_mean_ms),
            }
        })
        .collect()
}

/// Mean cumulative budget after query `index` across the seeds of one
/// (mechanism, table cap, delta, tau, analysts) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCurveRow {
    pub mechanism: MechanismKind,
    pub table_cap: f64,
    pub delta: f64,
    pub tau: f64,
    pub analysts: usize,
    pub index: usize,
    pub seeds: usize,
    pub cumulative_budget: f64,
}

pub fn mean_curves(traces: &[(Cell, Vec<QueryTrace>)]) -> Vec<MeanCurveRow> {
    let mut out: Vec<MeanCurveRow> = Vec::new();
    let mut groups: Vec<(Cell, Vec<&[QueryTrace]>)> = Vec::new();
    for (cell, t) in traces {
        let same = |c: &Cell| {
            c.mechanism == cell.mechanism
                && c.table_cap == cell.table_cap
                && c.delta == cell.delta
                && c.tau == cell.tau
                && c.analysts == cell.analysts
        };
        match groups.iter_mut().find(|(c, _)| same(c)) {
            Some((_, g)) => g.push(t),
            None => groups.push((*cell, vec![t])),
        }
    }
    for (cell, runs) in groups {
        let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
        for index in 0..longest {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.get(index))
                .map(|t| t.cumulative_budget)
                .collect();
            out.push(MeanCurveRow {
                mechanism: cell.mechanism,
                table_cap: cell.table_cap,
                delta: cell.delta,
                tau: cell.tau,
                analysts: cell.analysts,
                index,
                seeds: values.len(),
                cumulative_budget: values.iter().sum::<f64>() / values.len() as f64,
            });
        }
    }
    out
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(PartialEq)]
struct AggregateKey {
    experiment: String,
    mechanism: MechanismKind,
    table_cap: f64,
    delta: f64,
    tau: f64,
    analysts: usize,
}

impl AggregateKey {
    fn of(r: &SummaryRow) -> Self {
        Self {
            experiment: r.experiment.clone(),
            mechanism: r.mechanism,
            table_cap: r.table_cap,
            delta: r.delta,
            tau: r.tau,
            analysts: r.analysts,
        }
    }
}
