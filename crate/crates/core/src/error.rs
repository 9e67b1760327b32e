use thiserror::Error;

use crate::model::{AnalystId, ViewId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid attribute domain for `{name}`: {reason}")]
    InvalidDomain { name: String, reason: String },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("value `{value}` is not in the domain of attribute `{attribute}`")]
    ValueOutOfDomain { attribute: String, value: String },

    #[error("row {row} has {got} values, schema has {expected} attributes")]
    RowArity {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("view would have {bins} bins, exceeding the cap of {cap}")]
    BinCountOverflow { bins: u128, cap: usize },

    #[error("coefficient vector has length {got}, view `{view}` has {expected} bins")]
    LengthMismatch {
        view: ViewId,
        got: usize,
        expected: usize,
    },

    #[error("query targets view `{query_view}` but was evaluated against `{view}`")]
    ViewMismatch { query_view: ViewId, view: ViewId },

    #[error("unknown view `{0}`")]
    UnknownView(ViewId),

    #[error("unknown analyst `{0}`")]
    UnknownAnalyst(AnalystId),

    #[error("duplicate analyst `{0}`")]
    DuplicateAnalyst(AnalystId),

    #[error("privilege {privilege} of analyst `{analyst}` is outside [1, {max}]")]
    PrivilegeOutOfRange {
        analyst: AnalystId,
        privilege: u32,
        max: u32,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("could not bracket the calibration root for epsilon={epsilon}, delta={delta}, sensitivity={sensitivity}")]
    NoBracket {
        epsilon: f64,
        delta: f64,
        sensitivity: f64,
    },

    #[error("target variance {target} is infeasible: even epsilon={upper} gives variance {best}")]
    InfeasibleTarget { target: f64, upper: f64, best: f64 },

    #[error("local synopsis at epsilon={epsilon} requires negative incremental variance")]
    NegativeIncrement { epsilon: f64 },

    #[error("composition overflowed for k={k}")]
    CompositionOverflow { k: u64 },

    #[error("corruption graph component of size {size} violates bound t={t}")]
    CorruptionBound { size: usize, t: usize },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
