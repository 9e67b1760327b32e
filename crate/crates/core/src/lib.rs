// `!(x > 0.0)` checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod accountant;
pub mod engine;
pub mod error;
pub mod gauss;
pub mod harness;
pub mod io;
pub mod model;
pub mod provenance;
pub mod synopsis;

pub use error::{Error, Result};
pub use model::*;
