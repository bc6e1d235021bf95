//! Local Control Regression (LCR).
//!
//! LCR analyzes observational exposure-response data in three stages: cluster
//! the observational units on confounding covariates (Ward's minimum-variance
//! linkage over standardized values), fit a simple linear regression of the
//! response on the exposure within each cluster (with Benjamini-Hochberg FDR
//! adjustment across the per-cluster slope tests), and explain the resulting
//! local intercepts and slopes with significance-gated regression trees grown
//! on the remaining covariates.
//!
//! Modules:
//!
//! - [`dataset`] - input schema, CSV parsing, row exclusion, summary moments,
//!   z-score standardization
//! - [`statcore`] - least squares (simple and multiple), Student-t and F
//!   distribution functions, BH FDR adjustment, forward stepwise selection
//! - [`wardclust`] - Ward hierarchical clustering and dendrogram cuts
//! - [`rptree`] - recursive partitioning with LogWorth split significance
//! - [`pipeline`] - the end-to-end LCR workflow and report emission
//! - [`synthkit`] - synthetic datasets with planted cluster structure for
//!   recovery testing

pub mod dataset;
pub mod pipeline;
pub mod rptree;
pub mod statcore;
pub mod synthkit;
pub mod wardclust;

pub use dataset::{Dataset, LocationRecord, StandardizedMatrix, SummaryStats, Variable};
pub use pipeline::{LcrConfig, LcrReport};
pub use statcore::{OlsFit, SlrFit};
pub use wardclust::{ClusterAssignment, Dendrogram};
