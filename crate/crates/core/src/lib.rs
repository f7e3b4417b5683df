//! Spectral approximation of self-similar fractals by weighted graphs and
//! metric graphs, with numerical checks of quasi-unitary equivalence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact;
pub mod fem;
pub mod graph;
pub mod linalg;
pub mod manifold;
pub mod metric;
pub mod pcf;
pub mod pipeline;
pub mod que;

pub use error::{Error, Result};
