//! Differentiable logic networks for tabular regression.
//!
//! Continuous features are binarized by learned thresholds, combined by
//! learned two-input Boolean gates, and aggregated by a learned weighted sum.
//! Training uses a temperature-annealed continuous relaxation; afterwards the
//! network is discretized into a pure logic circuit that can be simplified,
//! read as weighted rules, exported to DOT, and costed in gate operations.

pub mod circuit;
pub mod cost;
pub mod data;
pub mod error;
pub mod gates;
pub mod hpo;
pub mod network;
pub mod optim;
pub mod train;
pub mod tree;

pub use error::{DlnError, Result};
