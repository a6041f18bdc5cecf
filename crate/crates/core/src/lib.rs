//! Semantic similarity for very short texts.
//!
//! The crate covers the whole experimental pipeline for comparing
//! fixed-length text fragments:
//!
//! - [`corpus`]: text normalization and extraction of pair / non-pair
//!   couples from a paragraph corpus, plus stratified dataset splits.
//! - [`embeddings`]: word2vec text-format loading and document-frequency
//!   tables.
//! - [`represent`]: tf-idf vectors and word-embedding aggregations (mean,
//!   max, min, min/max concatenation, top-idf filtered variants, idf-weighted
//!   and importance-weighted means).
//! - [`metrics`]: cosine, normalized Lp, Bray-Curtis and squared Euclidean.
//! - [`eval`]: optimal split error, Jensen-Shannon divergence, histograms and
//!   an exact two-tailed binomial test.
//! - [`learn`]: minibatch SGD with momentum for the global importance
//!   factors applied to df-sorted words.
//! - [`synth`]: a topic-structured synthetic corpus used for directional
//!   experiments and the bundled toy data.

pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod learn;
pub mod metrics;
pub mod represent;
pub mod synth;

mod numeric;

pub use corpus::{Couple, DatasetSplit, Fragment, Label, Token};
pub use embeddings::{DfTable, EmbeddingTable};
pub use eval::{EvalReport, Histogram, Polarity, ScoredCouples};
pub use learn::{ImportanceFactors, TrainConfig};
pub use metrics::DistanceKind;
pub use numeric::derive_seed;
pub use represent::{AggregateVector, AggregationMethod, Method, MethodKind, SparseVector};
