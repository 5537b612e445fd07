//! A seeded 5G RAN simulator paired with a digital twin that predicts
//! per-UE throughput, allocates PRBs and classifies KPI anomalies with a
//! small neural network, closed through a near-RT RIC style control loop.
//!
//! The modules follow the data path:
//!
//! - [`radio`]: link budget, SINR, RSRQ and CQI mapping
//! - [`sim`]: cells, UE mobility, shadowing, reselection and reports
//! - [`twin`]: throughput prediction and PRB allocation
//! - [`anomaly`]: fault injection, features, dataset generation and splits
//! - [`mlp`]: the 8-16-16-4 classifier and its training loop
//! - [`eval`]: accuracy, confusion matrices, t-SNE and silhouette
//! - [`ric`]: indication bus, detection xApp and closed-loop runner
//! - [`cli`]: the `rantwin` command line

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anomaly;
pub mod cli;
pub mod error;
pub mod eval;
pub mod mlp;
pub mod radio;
pub mod ric;
pub mod sim;
pub mod twin;

pub use error::{Error, Result};
