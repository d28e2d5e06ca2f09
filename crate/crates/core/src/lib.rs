//! Toolkit for building and evaluating statement-ranking benchmarks.
//!
//! The pipeline turns review statements into canonical paraphrase clusters
//! (embedding, polarity-restricted neighbor search, two-stage pair
//! validation, graph refinement), builds temporally split datasets and scores
//! statement rankers with P@k, R@k and NDCG@k under global-level and
//! item-level candidate sets.

pub mod ann;
pub mod clustmetrics;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod extract;
pub mod http;
pub mod pairflow;
pub mod pipeline;
pub mod rank;
pub mod refine;

pub use error::{Error, Result};
