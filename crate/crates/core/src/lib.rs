//! Feature-level toolkit for synthetic-to-real video anomaly detection.
//!
//! The pipeline generates two-view snippet-feature datasets in a source and a
//! target domain related by a known affine shift ([`scenegen`]), aligns source
//! features to the target class by class with a Wasserstein critic and
//! gradient penalty ([`adapt`]), trains a MIL ranking or fully supervised
//! snippet scorer ([`detect`]) and measures exact frame-level ROC-AUC across
//! dataset settings ([`eval`]). [`nn`] supplies the small differentiable MLP
//! stack everything trains on.

pub mod adapt;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod scenegen;
pub mod store;

pub use error::{Error, ErrorCategory, Result};
pub use store::{
    Dataset, DatasetStats, Domain, EventClass, FrameRange, Manifest, SnippetMatrix, Split,
    Video, VideoRecord,
};
