//! Query workloads: randomized range queries (RRQ) and breadth-first
//! exploration tasks (BFS).

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, QueryOutcome, Status};
use crate::error::{Error, Result};
use crate::model::{AnalystId, AttributeSpec, Demand, HistogramView, LinearQuery, ViewId};

/// Normal distribution whose parameters are fractions of a domain size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeNormal {
    pub mean: f64,
    pub sd: f64,
}

impl RelativeNormal {
    fn scaled(&self, n: usize) -> Result<Normal<f64>> {
        Normal::new(self.mean * n as f64, (self.sd * n as f64).max(1e-9))
            .map_err(|e| Error::InvalidParameter(format!("bad normal parameters: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    RoundRobin,
    Random,
}

/// How each generated query states its demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandSpec {
    /// Accuracy demand whose standard deviation is log-uniform in
    /// `[std_min, std_max]`; the demanded variance is its square.
    Accuracy { std_min: f64, std_max: f64 },
    /// Explicit budget, uniform in `[epsilon_min, epsilon_max]`.
    Budget { epsilon_min: f64, epsilon_max: f64 },
}

impl DemandSpec {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            DemandSpec::Accuracy { std_min, std_max } => (std_min, std_max),
            DemandSpec::Budget {
                epsilon_min,
                epsilon_max,
            } => (epsilon_min, epsilon_max),
        };
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "demand range [{lo}, {hi}] is invalid"
            )));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Demand {
        match *self {
            DemandSpec::Accuracy { std_min, std_max } => {
                let u: f64 = rng.random();
                let s = (std_min.ln() + u * (std_max.ln() - std_min.ln())).exp();
                Demand::Accuracy { variance: s * s }
            }
            DemandSpec::Budget {
                epsilon_min,
                epsilon_max,
            } => {
                let u: f64 = rng.random();
                Demand::Budget {
                    epsilon: epsilon_min + u * (epsilon_max - epsilon_min),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrqConfig {
    pub queries_per_analyst: usize,
    /// Attributes to query; empty means every schema attribute.
    pub attributes: Vec<String>,
    /// Selection weights over `attributes`; empty means Zipf weights
    /// `1/(k+1)^attribute_skew` in attribute order.
    pub attribute_weights: Vec<f64>,
    pub attribute_skew: f64,
    pub start: RelativeNormal,
    pub offset: RelativeNormal,
    pub scheduler: Scheduler,
    pub demand: DemandSpec,
}

impl Default for RrqConfig {
    fn default() -> Self {
        Self {
            queries_per_analyst: 500,
            attributes: Vec::new(),
            attribute_weights: Vec::new(),
            attribute_skew: 2.5,
            start: RelativeNormal {
                mean: 0.5,
                sd: 0.25,
            },
            offset: RelativeNormal {
                mean: 0.125,
                sd: 0.125,
            },
            scheduler: Scheduler::RoundRobin,
            demand: DemandSpec::Accuracy {
                std_min: 10.0,
                std_max: 60.0,
            },
        }
    }
}

/// One sampled range over a domain of size `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RangeDraw {
    pub lo: usize,
    pub hi: usize,
    pub start_clamped: bool,
    pub offset_clamped: bool,
}

/// Draws `[s, s + o]` with normal `s` and `o`, clamped into `0..n`.
pub fn sample_range<R: Rng + ?Sized>(
    n: usize,
    start: &Normal<f64>,
    offset: &Normal<f64>,
    rng: &mut R,
) -> RangeDraw {
    let top = (n - 1) as f64;
    let s: f64 = start.sample(rng);
    let o: f64 = offset.sample(rng);
    let start_clamped = !(0.0..=top).contains(&s);
    let lo = s.clamp(0.0, top).round() as usize;
    let end = lo as f64 + o;
    let offset_clamped = o < 0.0 || end > top;
    let hi = end.clamp(lo as f64, top).round() as usize;
    RangeDraw {
        lo,
        hi: hi.max(lo),
        start_clamped,
        offset_clamped,
    }
}

fn analyst_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the full interleaved RRQ workload. Each analyst's queries come
/// from an independent stream, so adding analysts leaves the earlier
/// analysts' queries unchanged.
pub fn generate_rrq(
    config: &RrqConfig,
    schema: &[AttributeSpec],
    analysts: &[AnalystId],
    seed: u64,
) -> Result<Vec<LinearQuery>> {
    if config.queries_per_analyst == 0 {
        return Err(Error::InvalidParameter(
            "queries_per_analyst must be positive".into(),
        ));
    }
    config.demand.validate()?;
    let attrs: Vec<&AttributeSpec> = if config.attributes.is_empty() {
        schema.iter().collect()
    } else {
        config
            .attributes
            .iter()
            .map(|name| {
                schema
                    .iter()
                    .find(|a| a.name() == name)
                    .ok_or_else(|| Error::UnknownAttribute(name.clone()))
            })
            .collect::<Result<_>>()?
    };
    if attrs.is_empty() {
        return Err(Error::InvalidParameter("workload has no attributes".into()));
    }
    if !(config.attribute_skew.is_finite() && config.attribute_skew >= 0.0) {
        return Err(Error::InvalidParameter(
            "attribute_skew must be non-negative".into(),
        ));
    }
    let weights: Vec<f64> = if config.attribute_weights.is_empty() {
        (0..attrs.len())
            .map(|k| ((k + 1) as f64).powf(-config.attribute_skew))
            .collect()
    } else if config.attribute_weights.len() != attrs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} attribute weights for {} attributes",
            config.attribute_weights.len(),
            attrs.len()
        )));
    } else {
        config.attribute_weights.clone()
    };
    let chooser = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidParameter(format!("attribute weights: {e}")))?;
    let dists = attrs
        .iter()
        .map(|a| {
            Ok((
                config.start.scaled(a.size())?,
                config.offset.scaled(a.size())?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_analyst: Vec<VecDeque<LinearQuery>> = Vec::with_capacity(analysts.len());
    for (i, analyst) in analysts.iter().enumerate() {
        let mut rng = analyst_rng(seed, i as u64 + 1);
        let mut qs = VecDeque::with_capacity(config.queries_per_analyst);
        for _ in 0..config.queries_per_analyst {
            let k = chooser.sample(&mut rng);
            let n = attrs[k].size();
            let r = sample_range(n, &dists[k].0, &dists[k].1, &mut rng);
            let demand = config.demand.sample(&mut rng);
            qs.push_back(LinearQuery::range(
                ViewId::new(attrs[k].name()),
                n,
                r.lo,
                r.hi,
                analyst.clone(),
                demand,
            )?);
        }
        per_analyst.push(qs);
    }

    let total = config.queries_per_analyst * analysts.len();
    let mut out = Vec::with_capacity(total);
    match config.scheduler {
        Scheduler::RoundRobin => {
            for _ in 0..config.queries_per_analyst {
                for qs in &mut per_analyst {
                    out.extend(qs.pop_front());
                }
            }
        }
        Scheduler::Random => {
            let mut rng = analyst_rng(seed, 0);
            let mut live: Vec<usize> = (0..analysts.len()).collect();
            while !live.is_empty() {
                let pick = rng.random_range(0..live.len());
                let i = live[pick];
                out.extend(per_analyst[i].pop_front());
                if per_analyst[i].is_empty() {
                    live.swap_remove(pick);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfsConfig {
    /// One task per entry, run in order by every analyst; each entry lists
    /// the attributes whose cross product is explored.
    pub roots: Vec<Vec<String>>,
    pub branching: usize,
    /// A node is expanded when its noisy count falls outside this range.
    pub threshold: (f64, f64),
    /// Demanded variance of every node query.
    pub accuracy: f64,
    pub max_depth: Option<usize>,
}

impl Default for BfsConfig {
    fn default() -> Self {
        Self {
            roots: vec![vec!["age".into()]],
            branching: 2,
            threshold: (0.0, 300.0),
            accuracy: 10_000.0,
            max_depth: None,
        }
    }
}

/// Hyper-rectangle of view bins, inclusive on both ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub depth: usize,
}

impl Region {
    fn widest(&self) -> (usize, usize) {
        self.lo
            .iter()
            .zip(&self.hi)
            .enumerate()
            .map(|(d, (l, h))| (d, h - l + 1))
            .max_by_key(|&(d, w)| (w, std::cmp::Reverse(d)))
            .expect("regions have at least one dimension")
    }

    pub fn divisible(&self) -> bool {
        self.widest().1 >= 2
    }

    /// Splits the widest dimension into at most `branching` non-empty parts.
    pub fn children(&self, branching: usize) -> Vec<Region> {
        let (d, width) = self.widest();
        let parts = branching.min(width);
        let base = width / parts;
        let extra = width % parts;
        let mut start = self.lo[d];
        (0..parts)
            .map(|p| {
                let len = base + usize::from(p < extra);
                let mut lo = self.lo.clone();
                let mut hi = self.hi.clone();
                lo[d] = start;
                hi[d] = start + len - 1;
                start += len;
                Region {
                    lo,
                    hi,
                    depth: self.depth + 1,
                }
            })
            .collect()
    }

    pub fn contains(&self, bins: &[usize]) -> bool {
        bins.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(b, (l, h))| (l..=h).contains(&b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfsVisit {
    pub analyst: AnalystId,
    pub region: Region,
    pub answered: bool,
    pub noisy: Option<f64>,
    pub expanded: bool,
    /// Table-level budget consumed after this query.
    pub cumulative_budget: f64,
}

/// One analyst's breadth-first traversal, driven one query at a time.
#[derive(Clone, Debug)]
pub struct BfsTask {
    analyst: AnalystId,
    view: ViewId,
    cells: Vec<Vec<usize>>,
    config: BfsConfig,
    queue: VecDeque<Region>,
    pending: Option<Region>,
    visits: Vec<BfsVisit>,
    partial: bool,
}

impl BfsTask {
    pub fn new(config: &BfsConfig, view: &HistogramView, analyst: AnalystId) -> Result<Self> {
        if config.branching < 2 {
            return Err(Error::InvalidParameter(
                "branching must be at least 2".into(),
            ));
        }
        let (low, high) = config.threshold;
        if low > high {
            return Err(Error::InvalidParameter(format!(
                "threshold ({low}, {high}) is inverted"
            )));
        }
        if !(config.accuracy > 0.0) {
            return Err(Error::InvalidParameter("accuracy must be positive".into()));
        }
        let radices = view.indexer.radices().to_vec();
        let cells = (0..view.bin_count())
            .map(|b| view.indexer.value_of(b))
            .collect();
        let root = Region {
            lo: vec![0; radices.len()],
            hi: radices.iter().map(|r| r - 1).collect(),
            depth: 0,
        };
        Ok(Self {
            analyst,
            view: view.id.clone(),
            cells,
            config: config.clone(),
            queue: VecDeque::from([root]),
            pending: None,
            visits: Vec::new(),
            partial: false,
        })
    }

    pub fn analyst(&self) -> &AnalystId {
        &self.analyst
    }

    pub fn is_finished(&self) -> bool {
        self.pending.is_none() && (self.partial || self.queue.is_empty())
    }

    /// True when the traversal stopped on a rejection.
    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn visits(&self) -> &[BfsVisit] {
        &self.visits
    }

    pub fn next_query(&mut self) -> Result<Option<LinearQuery>> {
        if self.pending.is_some() {
            return Err(Error::InvalidParameter(
                "previous query has not been observed".into(),
            ));
        }
        if self.partial {
            return Ok(None);
        }
        let Some(region) = self.queue.pop_front() else {
            return Ok(None);
        };
        let coefficients = self
            .cells
            .iter()
            .map(|bins| if region.contains(bins) { 1.0 } else { 0.0 })
            .collect();
        self.pending = Some(region);
        LinearQuery::new(
            self.view.clone(),
            coefficients,
            self.analyst.clone(),
            Demand::Accuracy {
                variance: self.config.accuracy,
            },
        )
        .map(Some)
    }

    pub fn observe(&mut self, outcome: &QueryOutcome, cumulative_budget: f64) -> Result<()> {
        let region = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidParameter("no query is pending".into()))?;
        let noisy = match outcome.status {
            Status::Answered { value, .. } => Some(value),
            Status::Rejected { .. } => None,
        };
        let (low, high) = self.config.threshold;
        let depth_ok = self.config.max_depth.is_none_or(|m| region.depth < m);
        let expanded = match noisy {
            Some(v) => !(low..=high).contains(&v) && region.divisible() && depth_ok,
            None => {
                self.partial = true;
                false
            }
        };
        if expanded {
            self.queue.extend(region.children(self.config.branching));
        }
        self.visits.push(BfsVisit {
            analyst: self.analyst.clone(),
            region,
            answered: noisy.is_some(),
            noisy,
            expanded,
            cumulative_budget,
        });
        Ok(())
    }
}

/// Runs `tasks` against `engine`, one query per unfinished task in turn.
/// Returns every outcome in submission order.
pub fn run_bfs(
    engine: &mut Engine,
    tasks: &mut [BfsTask],
) -> Result<Vec<(LinearQuery, QueryOutcome)>> {
    let mut out = Vec::new();
    loop {
        let mut progressed = false;
        for task in tasks.iter_mut() {
            if let Some(q) = task.next_query()? {
                let outcome = engine.handle_query(&q)?;
                task.observe(&outcome, engine.consumed_budget())?;
                out.push((q, outcome));
                progressed = true;
            }
        }
        if !progressed {
            return Ok(out);
        }
    }
}
