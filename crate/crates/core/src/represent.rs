//! Fragment representations: sparse tf-idf vectors and dense aggregations
//! of word embeddings.
//!
//! Every mean-style aggregation sums with a correctly rounded accumulator,
//! so results are independent of token order and two methods that add up
//! the same terms produce bit-identical vectors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::Token;
use crate::embeddings::{DfTable, EmbeddingTable};
use crate::learn::ImportanceFactors;
use crate::numeric::exact_sum;

/// Share of highest-idf words kept by the top-idf variants.
pub const DEFAULT_TOP_FRACTION: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepresentError {
    #[error("cannot aggregate an empty fragment")]
    EmptyFragment,
    #[error("word {0:?} has no embedding")]
    UnknownToken(String),
    #[error("expected {expected} importance factors, fragment has {found} words")]
    LengthMismatch { expected: usize, found: usize },
    #[error("top fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("unknown method {name:?}; valid methods: {valid}")]
    UnknownMethod { name: String, valid: String },
    #[error("method mean_importance needs importance factors")]
    MissingFactors,
}

pub type Result<T, E = RepresentError> = std::result::Result<T, E>;

/// Sparse term weights keyed by word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: BTreeMap<String, f64>,
}

impl SparseVector {
    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        exact_sum(
            small
                .entries
                .iter()
                .filter_map(|(k, v)| large.entries.get(k).map(|w| v * w)),
        )
    }

    pub fn norm(&self) -> f64 {
        exact_sum(self.entries.values().map(|v| v * v)).sqrt()
    }

    /// Cosine similarity; 0 when either vector is empty.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (self.dot(other) / denom).clamp(-1.0, 1.0)
    }
}

/// Raw in-fragment count times idf, for every word with nonzero idf.
pub fn tfidf_vector(fragment: &[Token], df: &DfTable) -> SparseVector {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for t in fragment {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let entries = counts
        .into_iter()
        .filter_map(|(w, n)| {
            let weight = f64::from(n) * df.idf(w);
            (weight != 0.0).then(|| (w.to_string(), weight))
        })
        .collect();
    SparseVector { entries }
}

/// Dense fixed-length representation of a fragment.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateVector(Vec<f64>);

impl AggregateVector {
    pub fn new(values: Vec<f64>) -> Self {
        AggregateVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for AggregateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn lookup<'e>(fragment: &[Token], emb: &'e EmbeddingTable) -> Result<Vec<&'e [f64]>> {
    if fragment.is_empty() {
        return Err(RepresentError::EmptyFragment);
    }
    fragment
        .iter()
        .map(|t| {
            emb.get(t.as_str())
                .ok_or_else(|| RepresentError::UnknownToken(t.as_str().to_string()))
        })
        .collect()
}

/// `(1/n) Σ weight_j · v_j`, clamped to the envelope of the weighted terms.
pub(crate) fn weighted_mean(vectors: &[&[f64]], weights: &[f64], dim: usize) -> AggregateVector {
    let n = vectors.len() as f64;
    let mut terms = vec![0.0; vectors.len()];
    let values = (0..dim)
        .map(|d| {
            for ((term, v), w) in terms.iter_mut().zip(vectors).zip(weights) {
                *term = w * v[d];
            }
            let lo = terms.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (exact_sum(terms.iter().copied()) / n).clamp(lo, hi)
        })
        .collect();
    AggregateVector(values)
}

fn componentwise(vectors: &[&[f64]], dim: usize, pick: fn(f64, f64) -> f64) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            vectors[1..]
                .iter()
                .fold(vectors[0][d], |acc, v| pick(acc, v[d]))
        })
        .collect()
}

/// Componentwise mean of the word vectors.
pub fn aggregate_mean(fragment: &[Token], emb: &EmbeddingTable) -> Result<AggregateVector> {
    let vectors = lookup(fragment, emb)?;
    Ok(weighted_mean(
        &vectors,
        &vec![1.0; vectors.len()],
        emb.dim(),
    ))
}

/// Componentwise maximum of the word vectors.
pub fn aggregate_max(fragment: &[Token], emb: &EmbeddingTable) -> Result<AggregateVector> {
    let vectors = lookup(fragment, emb)?;
    Ok(AggregateVector(componentwise(
        &vectors,
        emb.dim(),
        f64::max,
    )))
}

/// Componentwise minimum of the word vectors.
pub fn aggregate_min(fragment: &[Token], emb: &EmbeddingTable) -> Result<AggregateVector> {
    let vectors = lookup(fragment, emb)?;
    Ok(AggregateVector(componentwise(
        &vectors,
        emb.dim(),
        f64::min,
    )))
}

/// Maximum vector followed by minimum vector (length `2 · dim`).
pub fn aggregate_minmax_concat(
    fragment: &[Token],
    emb: &EmbeddingTable,
) -> Result<AggregateVector> {
    let vectors = lookup(fragment, emb)?;
    let mut values = componentwise(&vectors, emb.dim(), f64::max);
    values.extend(componentwise(&vectors, emb.dim(), f64::min));
    Ok(AggregateVector(values))
}

/// Keep the `round(fraction · n)` (at least one) highest-idf tokens.
///
/// Equal idf values keep the earlier token; survivors stay in fragment order.
pub fn filter_top_idf(fragment: &[Token], df: &DfTable, fraction: f64) -> Vec<Token> {
    let n = fragment.len();
    if n == 0 {
        return Vec::new();
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let idfs: Vec<f64> = fragment.iter().map(|t| df.idf(t.as_str())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| idfs[b].total_cmp(&idfs[a]).then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    kept.into_iter().map(|i| fragment[i].clone()).collect()
}

/// `(1/n) Σ idf(w_j) · w_j`.
pub fn aggregate_idf_weighted_mean(
    fragment: &[Token],
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<AggregateVector> {
    let vectors = lookup(fragment, emb)?;
    let weights: Vec<f64> = fragment.iter().map(|t| df.idf(t.as_str())).collect();
    Ok(weighted_mean(&vectors, &weights, emb.dim()))
}

/// Fragment positions sorted by ascending document frequency; equal df
/// keeps fragment order.
pub fn df_sorted_positions(fragment: &[Token], df: &DfTable) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fragment.len()).collect();
    order.sort_by_key(|&i| df.df(fragment[i].as_str()));
    order
}

/// Sort words by ascending df, scale the j-th by `factors[j]`, take the mean.
pub fn aggregate_importance_weighted(
    fragment: &[Token],
    emb: &EmbeddingTable,
    df: &DfTable,
    factors: &ImportanceFactors,
) -> Result<AggregateVector> {
    if factors.len() != fragment.len() {
        return Err(RepresentError::LengthMismatch {
            expected: factors.len(),
            found: fragment.len(),
        });
    }
    let vectors = lookup(fragment, emb)?;
    let sorted: Vec<&[f64]> = df_sorted_positions(fragment, df)
        .into_iter()
        .map(|i| vectors[i])
        .collect();
    Ok(weighted_mean(&sorted, factors.values(), emb.dim()))
}

/// Names of the aggregation schemes, as accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Mean,
    Max,
    Min,
    MinMaxConcat,
    MeanTopIdf,
    MaxTopIdf,
    MinMaxTopIdf,
    MeanIdfWeighted,
    MeanImportance,
}

impl MethodKind {
    pub const ALL: [MethodKind; 9] = [
        MethodKind::Mean,
        MethodKind::Max,
        MethodKind::Min,
        MethodKind::MinMaxConcat,
        MethodKind::MeanTopIdf,
        MethodKind::MaxTopIdf,
        MethodKind::MinMaxTopIdf,
        MethodKind::MeanIdfWeighted,
        MethodKind::MeanImportance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Mean => "mean",
            MethodKind::Max => "max",
            MethodKind::Min => "min",
            MethodKind::MinMaxConcat => "minmax_concat",
            MethodKind::MeanTopIdf => "mean_top_idf",
            MethodKind::MaxTopIdf => "max_top_idf",
            MethodKind::MinMaxTopIdf => "minmax_top_idf",
            MethodKind::MeanIdfWeighted => "mean_idf_weighted",
            MethodKind::MeanImportance => "mean_importance",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = RepresentError;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| RepresentError::UnknownMethod {
                name: s.to_string(),
                valid: MethodKind::ALL.map(MethodKind::name).join(", "),
            })
    }
}

/// A fully parameterized aggregation scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationMethod {
    Mean,
    Max,
    Min,
    MinMaxConcat,
    MeanTopIdf { fraction: f64 },
    MaxTopIdf { fraction: f64 },
    MinMaxTopIdf { fraction: f64 },
    MeanIdfWeighted,
    MeanImportance(ImportanceFactors),
}

impl AggregationMethod {
    /// Build from a kind name plus its parameters. `fraction` is used by the
    /// top-idf variants, `factors` only (and necessarily) by `mean_importance`.
    pub fn from_kind(
        kind: MethodKind,
        fraction: f64,
        factors: Option<ImportanceFactors>,
    ) -> Result<Self> {
        let check = |f: f64| {
            if f > 0.0 && f <= 1.0 {
                Ok(f)
            } else {
                Err(RepresentError::InvalidFraction(f))
            }
        };
        Ok(match kind {
            MethodKind::Mean => AggregationMethod::Mean,
            MethodKind::Max => AggregationMethod::Max,
            MethodKind::Min => AggregationMethod::Min,
            MethodKind::MinMaxConcat => AggregationMethod::MinMaxConcat,
            MethodKind::MeanTopIdf => AggregationMethod::MeanTopIdf {
                fraction: check(fraction)?,
            },
            MethodKind::MaxTopIdf => AggregationMethod::MaxTopIdf {
                fraction: check(fraction)?,
            },
            MethodKind::MinMaxTopIdf => AggregationMethod::MinMaxTopIdf {
                fraction: check(fraction)?,
            },
            MethodKind::MeanIdfWeighted => AggregationMethod::MeanIdfWeighted,
            MethodKind::MeanImportance => {
                AggregationMethod::MeanImportance(factors.ok_or(RepresentError::MissingFactors)?)
            }
        })
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            AggregationMethod::Mean => MethodKind::Mean,
            AggregationMethod::Max => MethodKind::Max,
            AggregationMethod::Min => MethodKind::Min,
            AggregationMethod::MinMaxConcat => MethodKind::MinMaxConcat,
            AggregationMethod::MeanTopIdf { .. } => MethodKind::MeanTopIdf,
            AggregationMethod::MaxTopIdf { .. } => MethodKind::MaxTopIdf,
            AggregationMethod::MinMaxTopIdf { .. } => MethodKind::MinMaxTopIdf,
            AggregationMethod::MeanIdfWeighted => MethodKind::MeanIdfWeighted,
            AggregationMethod::MeanImportance(_) => MethodKind::MeanImportance,
        }
    }

    /// Output length for embeddings of dimension `dim`.
    pub fn output_len(&self, dim: usize) -> usize {
        match self {
            AggregationMethod::MinMaxConcat | AggregationMethod::MinMaxTopIdf { .. } => 2 * dim,
            _ => dim,
        }
    }

    pub fn aggregate(
        &self,
        fragment: &[Token],
        emb: &EmbeddingTable,
        df: &DfTable,
    ) -> Result<AggregateVector> {
        match self {
            AggregationMethod::Mean => aggregate_mean(fragment, emb),
            AggregationMethod::Max => aggregate_max(fragment, emb),
            AggregationMethod::Min => aggregate_min(fragment, emb),
            AggregationMethod::MinMaxConcat => aggregate_minmax_concat(fragment, emb),
            AggregationMethod::MeanTopIdf { fraction } => {
                aggregate_mean(&filter_top_idf(fragment, df, *fraction), emb)
            }
            AggregationMethod::MaxTopIdf { fraction } => {
                aggregate_max(&filter_top_idf(fragment, df, *fraction), emb)
            }
            AggregationMethod::MinMaxTopIdf { fraction } => {
                aggregate_minmax_concat(&filter_top_idf(fragment, df, *fraction), emb)
            }
            AggregationMethod::MeanIdfWeighted => aggregate_idf_weighted_mean(fragment, emb, df),
            AggregationMethod::MeanImportance(factors) => {
                aggregate_importance_weighted(fragment, emb, df, factors)
            }
        }
    }
}

/// Any fragment representation: sparse tf-idf or an embedding aggregation.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    TfIdf,
    Aggregate(AggregationMethod),
}

impl Method {
    /// Parse `tfidf` or an aggregation name; see [`AggregationMethod::from_kind`].
    pub fn from_name(
        name: &str,
        fraction: f64,
        factors: Option<ImportanceFactors>,
    ) -> Result<Self> {
        if name == "tfidf" {
            return Ok(Method::TfIdf);
        }
        let kind = name
            .parse::<MethodKind>()
            .map_err(|_| RepresentError::UnknownMethod {
                name: name.to_string(),
                valid: format!(
                    "tfidf, {}",
                    MethodKind::ALL.map(MethodKind::name).join(", ")
                ),
            })?;
        AggregationMethod::from_kind(kind, fraction, factors).map(Method::Aggregate)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::TfIdf => "tfidf",
            Method::Aggregate(m) => m.kind().name(),
        }
    }
}
