//! Media attention diversity from daily ranked topic snapshots, and its
//! relationship to press freedom.
//!
//! The crate is organised as a pipeline: [`corpus`] loads snapshots,
//! [`filter`] keeps countries with complete top-k coverage, [`diversity`]
//! counts distinct topics, and [`stats`] and [`lmm`] relate the counts to
//! national indicators. [`pipeline`] wires the stages together and
//! [`synthetic`] builds fixtures with known answers.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod diversity;
pub mod error;
pub mod filter;
pub mod frame;
pub mod lmm;
pub mod pipeline;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
