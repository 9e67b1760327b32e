//! Domain types shared across the engine: attribute domains, datasets,
//! full-domain histogram views, analysts, budgets and linear queries.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest privilege level an analyst can hold.
pub const MAX_PRIVILEGE: u32 = 10;

/// Default cap on the number of bins a single view may materialize.
pub const DEFAULT_BIN_CAP: usize = 1_000_000;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(AnalystId);
string_id!(ViewId);

/// An attribute together with its full, ordered domain.
///
/// The domain is declared up front rather than read off the data so that
/// the set of active values never leaks through the shape of a view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAttribute", into = "RawAttribute")]
pub struct AttributeSpec {
    name: String,
    domain: Vec<String>,
    lookup: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct RawAttribute {
    name: String,
    domain: Vec<String>,
}

impl TryFrom<RawAttribute> for AttributeSpec {
    type Error = Error;

    fn try_from(raw: RawAttribute) -> Result<Self> {
        AttributeSpec::categorical(raw.name, raw.domain)
    }
}

impl From<AttributeSpec> for RawAttribute {
    fn from(a: AttributeSpec) -> Self {
        RawAttribute {
            name: a.name,
            domain: a.domain,
        }
    }
}

impl AttributeSpec {
    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        domain: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let name = name.into();
        let domain: Vec<String> = domain.into_iter().map(Into::into).collect();
        if domain.is_empty() {
            return Err(Error::InvalidDomain {
                name,
                reason: "domain is empty".into(),
            });
        }
        if domain.len() > u32::MAX as usize {
            return Err(Error::InvalidDomain {
                name,
                reason: "domain too large".into(),
            });
        }
        let mut lookup = HashMap::with_capacity(domain.len());
        for (i, v) in domain.iter().enumerate() {
            if lookup.insert(v.clone(), i as u32).is_some() {
                return Err(Error::InvalidDomain {
                    name,
                    reason: format!("duplicate value `{v}`"),
                });
            }
        }
        Ok(Self {
            name,
            domain,
            lookup,
        })
    }

    /// Integer attribute whose domain is every value in `lo..=hi`.
    pub fn integer_range(name: impl Into<String>, lo: i64, hi: i64) -> Result<Self> {
        let name = name.into();
        if lo > hi {
            return Err(Error::InvalidDomain {
                name,
                reason: format!("empty range {lo}..={hi}"),
            });
        }
        Self::categorical(name, (lo..=hi).map(|v| v.to_string()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &[String] {
        &self.domain
    }

    pub fn size(&self) -> usize {
        self.domain.len()
    }

    pub fn index_of(&self, value: &str) -> Option<u32> {
        self.lookup.get(value).copied()
    }
}

/// Row-major table whose cells are domain indices of the matching attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Vec<AttributeSpec>,
    cells: Vec<u32>,
}

impl Dataset {
    pub fn empty(schema: Vec<AttributeSpec>) -> Self {
        Self {
            schema,
            cells: Vec::new(),
        }
    }

    /// Builds a dataset from textual rows, rejecting any value outside its
    /// attribute's declared domain.
    pub fn from_values<R, S>(schema: Vec<AttributeSpec>, rows: R) -> Result<Self>
    where
        R: IntoIterator,
        R::Item: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut ds = Self::empty(schema);
        for (r, row) in rows.into_iter().enumerate() {
            let row = row.as_ref();
            if row.len() != ds.schema.len() {
                return Err(Error::RowArity {
                    row: r,
                    got: row.len(),
                    expected: ds.schema.len(),
                });
            }
            for (attr, value) in ds.schema.iter().zip(row) {
                let value = value.as_ref();
                let idx = attr
                    .index_of(value)
                    .ok_or_else(|| Error::ValueOutOfDomain {
                        attribute: attr.name.clone(),
                        value: value.to_owned(),
                    })?;
                ds.cells.push(idx);
            }
        }
        Ok(ds)
    }

    /// Builds a dataset from rows already encoded as domain indices.
    pub fn from_indices(schema: Vec<AttributeSpec>, cells: Vec<u32>) -> Result<Self> {
        let width = schema.len();
        if width == 0 {
            return Err(Error::InvalidParameter("schema has no attributes".into()));
        }
        if !cells.len().is_multiple_of(width) {
            return Err(Error::RowArity {
                row: cells.len() / width,
                got: cells.len() % width,
                expected: width,
            });
        }
        for (i, &c) in cells.iter().enumerate() {
            let attr = &schema[i % width];
            if c as usize >= attr.size() {
                return Err(Error::ValueOutOfDomain {
                    attribute: attr.name.clone(),
                    value: format!("#{c}"),
                });
            }
        }
        Ok(Self { schema, cells })
    }

    pub fn schema(&self) -> &[AttributeSpec] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        if self.schema.is_empty() {
            0
        } else {
            self.cells.len() / self.schema.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let w = self.schema.len();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks_exact(self.schema.len().max(1))
    }

    pub(crate) fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn attribute_position(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_owned()))
    }
}

/// Mixed-radix mapping between per-attribute bin tuples and flat bin indices.
/// The last attribute varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinIndexer {
    radices: Vec<usize>,
    strides: Vec<usize>,
    widths: Vec<usize>,
}

impl BinIndexer {
    /// `domain_sizes[i]` values of attribute `i` are grouped into bins of
    /// `widths[i]` consecutive values.
    pub fn new(domain_sizes: &[usize], widths: &[usize], cap: usize) -> Result<Self> {
        if domain_sizes.len() != widths.len() {
            return Err(Error::InvalidParameter(
                "one bin width per attribute is required".into(),
            ));
        }
        let mut radices = Vec::with_capacity(domain_sizes.len());
        let mut total: u128 = 1;
        for (&size, &w) in domain_sizes.iter().zip(widths) {
            if w == 0 {
                return Err(Error::InvalidParameter("bin width must be positive".into()));
            }
            let r = size.div_ceil(w);
            total = total.saturating_mul(r as u128);
            radices.push(r);
        }
        if total > cap as u128 {
            return Err(Error::BinCountOverflow { bins: total, cap });
        }
        let mut strides = vec![1usize; radices.len()];
        for i in (0..radices.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * radices[i + 1];
        }
        Ok(Self {
            radices,
            strides,
            widths: widths.to_vec(),
        })
    }

    pub fn bin_count(&self) -> usize {
        self.radices.iter().product()
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn index_of(&self, bins: &[usize]) -> usize {
        debug_assert_eq!(bins.len(), self.radices.len());
        bins.iter().zip(&self.strides).map(|(b, s)| b * s).sum()
    }

    pub fn value_of(&self, mut index: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|s| {
                let b = index / s;
                index %= s;
                b
            })
            .collect()
    }

    /// Bin for a tuple of raw domain indices (before coarsening).
    pub fn bin_of_values(&self, values: impl IntoIterator<Item = usize>) -> usize {
        values
            .into_iter()
            .zip(self.widths.iter().zip(&self.strides))
            .map(|(v, (w, s))| (v / w) * s)
            .sum()
    }
}

/// Declaration of a histogram view prior to materialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub id: ViewId,
    pub attributes: Vec<String>,
    /// Optional coarsening: number of consecutive domain values per bin,
    /// one entry per attribute. Omitted means width 1 everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_widths: Option<Vec<usize>>,
}

impl ViewSpec {
    pub fn over(attributes: &[&str]) -> Self {
        Self {
            id: ViewId::new(attributes.join("_")),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
            bin_widths: None,
        }
    }
}

/// Full-domain histogram over a subset of the schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramView {
    pub id: ViewId,
    pub attributes: Vec<String>,
    pub indexer: BinIndexer,
    pub true_counts: Vec<u64>,
    /// L2 sensitivity of the whole count vector under add/remove-one-tuple.
    pub sensitivity: f64,
}

impl HistogramView {
    pub fn bin_count(&self) -> usize {
        self.true_counts.len()
    }

    pub fn total(&self) -> u64 {
        self.true_counts.iter().sum()
    }
}

/// Materializes a full-domain histogram, including zero bins for domain
/// values absent from the data. Counting views have sensitivity 1 whether
/// or not they are coarsened.
pub fn build_view(dataset: &Dataset, spec: &ViewSpec) -> Result<HistogramView> {
    build_view_capped(dataset, spec, DEFAULT_BIN_CAP)
}

pub fn build_view_capped(dataset: &Dataset, spec: &ViewSpec, cap: usize) -> Result<HistogramView> {
    if spec.attributes.is_empty() {
        return Err(Error::InvalidParameter(
            "view needs at least one attribute".into(),
        ));
    }
    let positions = spec
        .attributes
        .iter()
        .map(|a| dataset.attribute_position(a))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = positions
        .iter()
        .map(|&p| dataset.schema()[p].size())
        .collect();
    let widths = match &spec.bin_widths {
        Some(w) if w.len() != sizes.len() => {
            return Err(Error::InvalidParameter(format!(
                "view `{}` declares {} bin widths for {} attributes",
                spec.id,
                w.len(),
                sizes.len()
            )))
        }
        Some(w) => w.clone(),
        None => vec![1; sizes.len()],
    };
    let indexer = BinIndexer::new(&sizes, &widths, cap)?;
    let mut counts = vec![0u64; indexer.bin_count()];
    for row in dataset.rows() {
        let k = indexer.bin_of_values(positions.iter().map(|&p| row[p] as usize));
        counts[k] += 1;
    }
    Ok(HistogramView {
        id: spec.id.clone(),
        attributes: spec.attributes.clone(),
        indexer,
        true_counts: counts,
        sensitivity: 1.0,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyst {
    pub id: AnalystId,
    pub privilege: u32,
}

impl Analyst {
    pub fn new(id: impl Into<AnalystId>, privilege: u32) -> Result<Self> {
        let id = id.into();
        if !(1..=MAX_PRIVILEGE).contains(&privilege) {
            return Err(Error::PrivilegeOutOfRange {
                analyst: id,
                privilege,
                max: MAX_PRIVILEGE,
            });
        }
        Ok(Self { id, privilege })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} must be >= 0"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta {delta} must be in [0, 1)"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// What an analyst asks for alongside a query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Demand {
    /// Upper bound on the expected squared error of the answer.
    Accuracy { variance: f64 },
    /// Explicit privacy budget; delta is the engine's fixed per-query delta.
    Budget { epsilon: f64 },
}

/// A linear query over the bins of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearQuery {
    pub view_id: ViewId,
    pub coefficients: Vec<f64>,
    pub analyst_id: AnalystId,
    pub demand: Demand,
}

impl LinearQuery {
    pub fn new(
        view_id: ViewId,
        coefficients: Vec<f64>,
        analyst_id: AnalystId,
        demand: Demand,
    ) -> Result<Self> {
        let q = Self {
            view_id,
            coefficients,
            analyst_id,
            demand,
        };
        q.validate()?;
        Ok(q)
    }

    /// 0/1 query over the inclusive bin range `lo..=hi` of a `bins`-bin view.
    pub fn range(
        view_id: ViewId,
        bins: usize,
        lo: usize,
        hi: usize,
        analyst_id: AnalystId,
        demand: Demand,
    ) -> Result<Self> {
        if lo > hi || hi >= bins {
            return Err(Error::InvalidParameter(format!(
                "range {lo}..={hi} is not inside {bins} bins"
            )));
        }
        let mut c = vec![0.0; bins];
        c[lo..=hi].iter_mut().for_each(|x| *x = 1.0);
        Self::new(view_id, c, analyst_id, demand)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coefficients.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("query coefficients"));
        }
        if self.coefficients.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidParameter(
                "query has no nonzero coefficient".into(),
            ));
        }
        match self.demand {
            Demand::Accuracy { variance } if !(variance.is_finite() && variance > 0.0) => Err(
                Error::InvalidParameter(format!("accuracy demand {variance} must be positive")),
            ),
            Demand::Budget { epsilon } if !(epsilon.is_finite() && epsilon > 0.0) => Err(
                Error::InvalidParameter(format!("budget demand {epsilon} must be positive")),
            ),
            _ => Ok(()),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }

    fn check_against(&self, view: &HistogramView) -> Result<()> {
        if self.view_id != view.id {
            return Err(Error::ViewMismatch {
                query_view: self.view_id.clone(),
                view: view.id.clone(),
            });
        }
        if self.coefficients.len() != view.bin_count() {
            return Err(Error::LengthMismatch {
                view: view.id.clone(),
                got: self.coefficients.len(),
                expected: view.bin_count(),
            });
        }
        Ok(())
    }
}

/// Exact answer of `q` on the view's true counts.
pub fn evaluate_query_true(view: &HistogramView, q: &LinearQuery) -> Result<f64> {
    q.check_against(view)?;
    Ok(q.coefficients
        .iter()
        .zip(&view.true_counts)
        .map(|(c, &n)| c * n as f64)
        .sum())
}

/// L2 sensitivity of `q`: one tuple moves one bin by one, so the answer
/// moves by at most the largest coefficient magnitude.
pub fn query_sensitivity(q: &LinearQuery, view: &HistogramView) -> f64 {
    q.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs())) * view.sensitivity
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_attr_schema() -> Vec<AttributeSpec> {
        vec![
            AttributeSpec::categorical("a", ["x", "y", "z", "w"]).unwrap(),
            AttributeSpec::integer_range("b", 0, 4).unwrap(),
        ]
    }

    #[test]
    fn attribute_domain_invariants() {
        assert!(AttributeSpec::categorical("a", Vec::<String>::new()).is_err());
        assert!(AttributeSpec::categorical("a", ["p", "q", "p"]).is_err());
        assert!(AttributeSpec::integer_range("a", 3, 2).is_err());
        let a = AttributeSpec::integer_range("age", 17, 20).unwrap();
        assert_eq!(a.domain(), ["17", "18", "19", "20"]);
        assert_eq!(a.index_of("19"), Some(2));
    }

    #[test]
    fn empty_dataset_gives_zero_counts() {
        let schema = vec![AttributeSpec::categorical("c", ["a", "b", "c"]).unwrap()];
        let ds = Dataset::empty(schema);
        let v = build_view(&ds, &ViewSpec::over(&["c"])).unwrap();
        assert_eq!(v.true_counts, vec![0, 0, 0]);
        assert_eq!(v.sensitivity, 1.0);
    }

    #[test]
    fn direct_count() {
        let schema = vec![AttributeSpec::categorical("c", ["a", "b"]).unwrap()];
        let ds = Dataset::from_values(schema, [["a"], ["a"]]).unwrap();
        let v = build_view(&ds, &ViewSpec::over(&["c"])).unwrap();
        assert_eq!(v.true_counts, vec![2, 0]);
    }

    #[test]
    fn rejects_out_of_domain_values_and_bad_arity() {
        let schema = vec![AttributeSpec::categorical("c", ["a", "b"]).unwrap()];
        assert!(matches!(
            Dataset::from_values(schema.clone(), [["q"]]),
            Err(Error::ValueOutOfDomain { .. })
        ));
        assert!(matches!(
            Dataset::from_values(schema.clone(), [vec!["a", "b"]]),
            Err(Error::RowArity { .. })
        ));
        assert!(Dataset::from_indices(schema, vec![0, 2]).is_err());
    }

    #[test]
    fn unknown_attribute_and_bin_cap() {
        let ds = Dataset::empty(two_attr_schema());
        assert!(matches!(
            build_view(&ds, &ViewSpec::over(&["nope"])),
            Err(Error::UnknownAttribute(_))
        ));
        assert!(matches!(
            build_view_capped(&ds, &ViewSpec::over(&["a", "b"]), 19),
            Err(Error::BinCountOverflow { bins: 20, cap: 19 })
        ));
        assert!(build_view(
            &ds,
            &ViewSpec {
                id: "v".into(),
                attributes: vec![],
                bin_widths: None
            }
        )
        .is_err());
    }

    #[test]
    fn coarsened_view_merges_consecutive_values() {
        let schema = vec![AttributeSpec::integer_range("n", 0, 9).unwrap()];
        let rows: Vec<[String; 1]> = (0..10).map(|i| [i.to_string()]).collect();
        let ds = Dataset::from_values(schema, rows).unwrap();
        let spec = ViewSpec {
            id: "n4".into(),
            attributes: vec!["n".into()],
            bin_widths: Some(vec![4]),
        };
        let v = build_view(&ds, &spec).unwrap();
        assert_eq!(v.true_counts, vec![4, 4, 2]);
        assert_eq!(v.sensitivity, 1.0);
    }

    #[test]
    fn indexer_round_trip_exhaustive() {
        let ix = BinIndexer::new(&[7, 3, 11, 5], &[1, 1, 2, 1], DEFAULT_BIN_CAP).unwrap();
        assert_eq!(ix.bin_count(), 7 * 3 * 6 * 5);
        for k in 0..ix.bin_count() {
            assert_eq!(ix.index_of(&ix.value_of(k)), k);
        }
    }

    #[test]
    fn query_truth_and_sensitivity() {
        let schema = vec![AttributeSpec::categorical("c", ["a", "b", "c"]).unwrap()];
        let ds = Dataset::from_values(schema, [["a"], ["b"], ["b"], ["c"]]).unwrap();
        let v = build_view(&ds, &ViewSpec::over(&["c"])).unwrap();
        let mk = |c: Vec<f64>| LinearQuery {
            view_id: v.id.clone(),
            coefficients: c,
            analyst_id: "a".into(),
            demand: Demand::Budget { epsilon: 1.0 },
        };
        assert_eq!(evaluate_query_true(&v, &mk(vec![0.0; 3])).unwrap(), 0.0);
        assert_eq!(evaluate_query_true(&v, &mk(vec![1.0; 3])).unwrap(), 4.0);
        assert_eq!(query_sensitivity(&mk(vec![0.0, 1.0, 1.0]), &v), 1.0);
        assert_eq!(query_sensitivity(&mk(vec![0.0, 3.0, 3.0]), &v), 3.0);
        assert!(matches!(
            evaluate_query_true(&v, &mk(vec![1.0; 2])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mixed_coefficient_sensitivity_matches_enumeration() {
        // Two-bin toy view: enumerate adding or removing a single tuple in
        // each bin and take the largest change in the answer.
        let schema = vec![AttributeSpec::categorical("c", ["a", "b"]).unwrap()];
        let ds = Dataset::from_values(schema, [["a"], ["b"], ["b"]]).unwrap();
        let v = build_view(&ds, &ViewSpec::over(&["c"])).unwrap();
        let q = LinearQuery {
            view_id: v.id.clone(),
            coefficients: vec![0.5, 2.0],
            analyst_id: "a".into(),
            demand: Demand::Budget { epsilon: 1.0 },
        };
        let base = evaluate_query_true(&v, &q).unwrap();
        let mut worst = 0.0f64;
        for bin in 0..2 {
            for delta in [-1i64, 1] {
                let mut nb = v.clone();
                nb.true_counts[bin] = (nb.true_counts[bin] as i64 + delta) as u64;
                worst = worst.max((evaluate_query_true(&nb, &q).unwrap() - base).abs());
            }
        }
        assert_eq!(worst, 2.0);
        assert_eq!(query_sensitivity(&q, &v), worst);
    }

    #[test]
    fn query_validation() {
        let z = LinearQuery::new(
            "v".into(),
            vec![0.0, 0.0],
            "a".into(),
            Demand::Budget { epsilon: 1.0 },
        );
        assert!(z.is_err());
        let bad_v = LinearQuery::new(
            "v".into(),
            vec![1.0],
            "a".into(),
            Demand::Accuracy { variance: 0.0 },
        );
        assert!(bad_v.is_err());
        let r = LinearQuery::range(
            "v".into(),
            5,
            1,
            3,
            "a".into(),
            Demand::Accuracy { variance: 1.0 },
        )
        .unwrap();
        assert_eq!(r.coefficients, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(r.norm_sq(), 3.0);
        assert!(LinearQuery::range(
            "v".into(),
            5,
            3,
            5,
            "a".into(),
            Demand::Accuracy { variance: 1.0 }
        )
        .is_err());
    }

    #[test]
    fn analyst_privilege_range() {
        assert!(Analyst::new("a", 0).is_err());
        assert!(Analyst::new("a", 11).is_err());
        assert!(Analyst::new("a", 10).is_ok());
    }

    #[test]
    fn budget_invariants() {
        assert!(PrivacyBudget::new(-0.1, 0.0).is_err());
        assert!(PrivacyBudget::new(0.1, 1.0).is_err());
        assert!(PrivacyBudget::new(0.0, 0.0).is_ok());
    }
}
