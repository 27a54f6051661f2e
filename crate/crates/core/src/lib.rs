//! Membership-inference auditing for time-series forecasting models.
//!
//! The crate covers the full audit pipeline: a series data model with
//! windowing and robust scaling, desk-scale forecasters, per-record attack
//! signals, shadow-model ensembles, statistics-based attacks (multi-signal
//! LiRA, RMIA, an ensemble baseline), the learned DTS attack, and ROC-based
//! evaluation of record- and user-level membership games.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attacks;
pub mod config;
pub mod dts;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod linalg;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod series;
pub mod shadow;
pub mod signals;

pub use error::{Error, Result};
pub use matrix::Matrix;
