//! Explainable multi-hop link prediction on typed knowledge graphs.
//!
//! The crate trains a policy-gradient graph walker (optionally rewarded for
//! following metapaths) and translational/bilinear embedding baselines, ranks
//! candidate answers under a single filtered, type-pruned protocol, and turns
//! walker witness paths into metapath statistics and readable explanations.

pub mod beam;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod explain;
pub mod graph;
pub mod kge;
pub mod metapath;
pub mod optim;
pub mod policy;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod walk;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
