//! Deterministic simulator of federated averaging under Laplace gradient
//! poisoning, defended by k-means clustering of client updates and a
//! reward ledger that permanently removes persistent adversaries.
//!
//! Module map:
//! - [`data`]: datasets, CSV ingestion, Non-IID partitioning
//! - [`model`]: logistic regression and local SGD
//! - [`federation`]: the averaging loop
//! - [`adversary`]: Laplace poisoning
//! - [`clustering`]: k-means, cluster-count selection, labeling
//! - [`defense`]: reward ledger and elimination
//! - [`harness`]: configs, seeds, outputs

pub mod adversary;
pub mod clustering;
pub mod data;
pub mod defense;
pub mod error;
pub mod federation;
pub mod harness;
pub mod model;

pub use error::{Error, Result};
