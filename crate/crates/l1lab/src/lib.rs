//! A workbench for low-distortion embeddings of star and complete k-ary tree
//! metrics into l1^d.
//!
//! The library has two halves that meet in the middle:
//!
//! * the constructive lower-bound machinery: an embedding of the n-star is
//!   converted into a family of nearly-disjoint probability measures, which a
//!   four-stage transformation sparsifies into a 1/2-unrelated family with
//!   small supports, every inequality recorded in a machine-checkable
//!   [`pipeline::PipelineCertificate`]; closed-form counting and packing
//!   evaluators turn the same inequalities into explicit dimension bounds;
//! * upper-bound constructions: random sparse-support star embeddings at
//!   d = O(log n / eps^2), the tree-to-star reduction, and the square-root
//!   helix composition into l2.
//!
//! A small subgradient-descent oracle ([`search`]) and a sweep driver
//! ([`sweep`]) trace the empirical dimension-distortion frontier against the
//! evaluated bounds.

pub mod bounds;
pub mod construct;
pub mod embedding;
pub mod error;
pub mod jsonio;
pub mod kahane;
pub mod measure;
pub mod metric;
pub mod pipeline;
pub mod search;
pub mod sweep;

pub use embedding::{DistortionReport, Embedding, EmbeddingDoc, Norm, SparseVec};
pub use error::{Error, Result};
pub use measure::{FiniteMeasure, MeasureFamily, MeasureFamilyDoc, ProbabilityMeasure};
pub use metric::{kary_tree_metric, star_metric, FiniteMetricSpace, MetricSpaceDoc};
