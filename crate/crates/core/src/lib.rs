//! Off-axis iris recognition engine and benchmark harness.
//!
//! The crate covers the whole evaluation loop:
//!
//! - [`synthgen`] renders a deterministic ocular-acquisition corpus (gaze grid,
//!   brightness-driven pupil size, occlusions, reflections) with exact
//!   ground-truth annotations.
//! - [`quality`] drops unannotated captures, scores five quality dimensions
//!   and splits samples into standard and challenging.
//! - [`preprocess`] holds the two front ends: the normalization-free square
//!   crop of the iris box and rubber-sheet unwrapping.
//! - [`encode`] extracts Gabor-phase and ordinal iriscodes and a reference
//!   embedding, and imports externally trained embeddings.
//! - [`matcher`] compares templates (rotation-compensated masked Hamming
//!   distance, cosine similarity) and scores pair lists in parallel.
//! - [`protocols`] builds the subject-disjoint split and the eight
//!   verification/identification protocols.
//! - [`metrics`] computes FRR@FAR, rank-1 accuracy, dual-eye fusion and reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

pub mod datamodel;
pub mod encode;
pub mod error;
pub mod matcher;
pub mod metrics;
pub mod preprocess;
pub mod protocols;
pub mod quality;
pub mod raster;
pub mod scalar;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Ellipse64 = datamodel::Ellipse<f64>;
pub type Ellipse32 = datamodel::Ellipse<f32>;
pub type BBox64 = datamodel::BBox<f64>;
pub type Embedding64 = datamodel::Embedding<f64>;
pub type Embedding32 = datamodel::Embedding<f32>;
pub type NormalizedIris64 = preprocess::NormalizedIris<f64>;
pub type NormalizedIris32 = preprocess::NormalizedIris<f32>;
pub type Raster64 = raster::Raster<f64>;
pub type Raster32 = raster::Raster<f32>;
pub type MatchScore64 = matcher::MatchScore<f64>;
pub type ScoreSet64 = metrics::ScoreSet<f64>;
pub type DetPoint64 = metrics::DetPoint<f64>;
