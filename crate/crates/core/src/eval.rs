//! Separation power of a representation: how well do its scores tell pairs
//! from non-pairs?
//!
//! Two summary numbers are produced per method: the optimal split error (the
//! misclassification rate of the best single-threshold classifier) and the
//! Jensen-Shannon divergence between the pair and non-pair score
//! histograms. An exact binomial test compares error counts of two methods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Couple, Label};
use crate::embeddings::{DfTable, EmbeddingTable};
use crate::metrics::{DistanceKind, MetricError};
use crate::represent::{tfidf_vector, Method, RepresentError};

pub use crate::metrics::Polarity;

/// Default number of equal-width bins for divergence estimates.
pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("couple {index}: {source}")]
    Represent {
        index: usize,
        #[source]
        source: RepresentError,
    },
    #[error("couple {index}: {source}")]
    Metric {
        index: usize,
        #[source]
        source: MetricError,
    },
    #[error("tf-idf vectors are compared with cosine similarity only, not {0}")]
    UnsupportedDistance(DistanceKind),
    #[error("no couples to score")]
    NoCouples,
    #[error("no {0} scores")]
    EmptySide(&'static str),
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("sample {value} outside histogram range [{low}, {high}]")]
    OutOfRange { value: f64, low: f64, high: f64 },
    #[error("histogram edges must be at least two strictly increasing values")]
    InvalidEdges,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("invalid binomial test input: {0}")]
    InvalidBinomial(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Scores of all couples, partitioned by label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCouples {
    pub pair_scores: Vec<f64>,
    pub nonpair_scores: Vec<f64>,
    pub polarity: Polarity,
}

impl ScoredCouples {
    pub fn new(
        pair_scores: Vec<f64>,
        nonpair_scores: Vec<f64>,
        polarity: Polarity,
    ) -> Result<Self> {
        if let Some(bad) = pair_scores
            .iter()
            .chain(&nonpair_scores)
            .find(|x| !x.is_finite())
        {
            return Err(EvalError::NonFinite(*bad));
        }
        Ok(ScoredCouples {
            pair_scores,
            nonpair_scores,
            polarity,
        })
    }

    pub fn total(&self) -> usize {
        self.pair_scores.len() + self.nonpair_scores.len()
    }

    fn check_sides(&self) -> Result<()> {
        if self.pair_scores.is_empty() {
            return Err(EvalError::EmptySide("pair"));
        }
        if self.nonpair_scores.is_empty() {
            return Err(EvalError::EmptySide("non-pair"));
        }
        Ok(())
    }

    /// Whether a score is classified as a pair at threshold `t`.
    fn predicts_pair(&self, score: f64, t: f64) -> bool {
        match self.polarity {
            Polarity::Similarity => score > t,
            Polarity::Distance => score < t,
        }
    }
}

/// Represent both fragments of every couple with `method` and compare them
/// with `dist`. Tf-idf vectors only support cosine similarity.
pub fn score_couples(
    couples: &[Couple],
    method: &Method,
    dist: DistanceKind,
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<ScoredCouples> {
    if couples.is_empty() {
        return Err(EvalError::NoCouples);
    }
    if *method == Method::TfIdf && dist != DistanceKind::Cosine {
        return Err(EvalError::UnsupportedDistance(dist));
    }
    let scores: Vec<(f64, Label)> = couples
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let score = match method {
                Method::TfIdf => tfidf_vector(c.first(), df).cosine(&tfidf_vector(c.second(), df)),
                Method::Aggregate(m) => {
                    let represent = |f: &[crate::corpus::Token]| {
                        m.aggregate(f, emb, df)
                            .map_err(|source| EvalError::Represent { index, source })
                    };
                    let a = represent(c.first())?;
                    let b = represent(c.second())?;
                    dist.score(a.as_slice(), b.as_slice())
                        .map_err(|source| EvalError::Metric { index, source })?
                }
            };
            Ok((score, c.label()))
        })
        .collect::<Result<_>>()?;

    let mut pair_scores = Vec::new();
    let mut nonpair_scores = Vec::new();
    for (score, label) in scores {
        match label {
            Label::Pair => pair_scores.push(score),
            Label::NonPair => nonpair_scores.push(score),
        }
    }
    ScoredCouples::new(pair_scores, nonpair_scores, dist.polarity())
}

/// Number of couples misclassified at threshold `t`.
pub fn misclassified(scored: &ScoredCouples, t: f64) -> usize {
    let missed_pairs = scored
        .pair_scores
        .iter()
        .filter(|&&s| !scored.predicts_pair(s, t))
        .count();
    let false_pairs = scored
        .nonpair_scores
        .iter()
        .filter(|&&s| scored.predicts_pair(s, t))
        .count();
    missed_pairs + false_pairs
}

/// Misclassification rate at a fixed threshold.
pub fn error_at_threshold(scored: &ScoredCouples, t: f64) -> Result<f64> {
    scored.check_sides()?;
    Ok(misclassified(scored, t) as f64 / scored.total() as f64)
}

/// Threshold minimizing the misclassification rate, and that rate.
///
/// Candidates are the midpoints between consecutive distinct pooled scores
/// plus one sentinel below the minimum and one above the maximum. The
/// smallest minimizing threshold wins.
pub fn optimal_split(scored: &ScoredCouples) -> Result<(f64, f64)> {
    scored.check_sides()?;
    let mut pooled: Vec<(f64, bool)> = scored
        .pair_scores
        .iter()
        .map(|&s| (s, true))
        .chain(scored.nonpair_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let lowest = pooled[0].0;
    let highest = pooled[pooled.len() - 1].0;
    // Below every score: similarity calls everything a pair, distance calls
    // everything a non-pair.
    let mut errors: i64 = match scored.polarity {
        Polarity::Similarity => scored.nonpair_scores.len() as i64,
        Polarity::Distance => scored.pair_scores.len() as i64,
    };
    let mut best = (errors, lowest - 1.0);

    let mut i = 0;
    while i < pooled.len() {
        let value = pooled[i].0;
        let (mut pairs, mut nonpairs) = (0i64, 0i64);
        while i < pooled.len() && pooled[i].0 == value {
            if pooled[i].1 {
                pairs += 1;
            } else {
                nonpairs += 1;
            }
            i += 1;
        }
        // Moving the threshold above `value` flips this group's prediction.
        errors += match scored.polarity {
            Polarity::Similarity => pairs - nonpairs,
            Polarity::Distance => nonpairs - pairs,
        };
        let t = match pooled.get(i) {
            Some(&(next, _)) => between(value, next, scored.polarity),
            None => highest + 1.0,
        };
        if errors < best.0 {
            best = (errors, t);
        }
    }
    Ok((best.1, best.0 as f64 / scored.total() as f64))
}

/// A threshold strictly separating `lo` from `hi` under the polarity's rule.
fn between(lo: f64, hi: f64, polarity: Polarity) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid < hi {
        return mid;
    }
    // adjacent floats: `score > lo` and `score < hi` both split correctly
    match polarity {
        Polarity::Similarity => lo,
        Polarity::Distance => hi,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Count samples into half-open bins `[e_i, e_{i+1})`, last bin closed.
pub fn build_histogram(samples: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2
        || edges
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(EvalError::InvalidEdges);
    }
    let (low, high) = (edges[0], edges[edges.len() - 1]);
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for &x in samples {
        if !(x >= low && x <= high) {
            return Err(EvalError::OutOfRange {
                value: x,
                low,
                high,
            });
        }
        let bin = (edges.partition_point(|&e| e <= x) - 1).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram {
        bin_edges: edges.to_vec(),
        counts,
    })
}

/// `bins` equal-width edges spanning `[low, high]`; the last edge is `high` exactly.
pub fn equal_width_edges(low: f64, high: f64, bins: usize) -> Vec<f64> {
    let width = (high - low) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| low + width * i as f64).collect();
    edges.push(high);
    edges
}

/// Pair and non-pair histograms over shared equal-width bins spanning the
/// pooled score range. A degenerate range gets one unit-wide bin per side.
pub fn paired_histograms(scored: &ScoredCouples, bins: usize) -> Result<(Histogram, Histogram)> {
    if bins < 1 {
        return Err(EvalError::TooFewBins(bins));
    }
    let (low, high) = pooled_range(&scored.pair_scores, &scored.nonpair_scores)
        .ok_or(EvalError::EmptySide("pooled"))?;
    let edges = if low < high {
        equal_width_edges(low, high, bins)
    } else {
        equal_width_edges(low - 0.5, high + 0.5, bins)
    };
    Ok((
        build_histogram(&scored.pair_scores, &edges)?,
        build_histogram(&scored.nonpair_scores, &edges)?,
    ))
}

fn pooled_range(p: &[f64], q: &[f64]) -> Option<(f64, f64)> {
    let mut it = p.iter().chain(q).copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).ln())
        .sum()
}

/// Jensen-Shannon divergence (nats) between the empirical distributions of
/// two samples, histogrammed over shared equal-width bins.
pub fn js_divergence(p_samples: &[f64], q_samples: &[f64], bins: usize) -> Result<f64> {
    if p_samples.is_empty() || q_samples.is_empty() {
        return Err(EvalError::EmptySide("sample"));
    }
    if bins < 2 {
        return Err(EvalError::TooFewBins(bins));
    }
    let (low, high) = pooled_range(p_samples, q_samples).expect("non-empty samples");
    if !(low.is_finite() && high.is_finite()) {
        return Err(EvalError::NonFinite(if low.is_finite() {
            high
        } else {
            low
        }));
    }
    if low == high {
        return Ok(0.0);
    }
    let edges = equal_width_edges(low, high, bins);
    let hp = build_histogram(p_samples, &edges)?;
    let hq = build_histogram(q_samples, &edges)?;
    let np = p_samples.len() as f64;
    let nq = q_samples.len() as f64;
    let p: Vec<f64> = hp.counts.iter().map(|&c| c as f64 / np).collect();
    let q: Vec<f64> = hq.counts.iter().map(|&c| c as f64 / nq).collect();
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a + b) / 2.0).collect();
    let jsd = 0.5 * kl_to_mixture(&p, &m) + 0.5 * kl_to_mixture(&q, &m);
    Ok(jsd.clamp(0.0, std::f64::consts::LN_2))
}

/// Two-tailed exact binomial test of `errors_a` successes in `n` trials
/// against the null rate `errors_b / n`.
///
/// The p-value sums the probabilities of all outcomes no more likely than
/// the observed one, evaluated in log space.
pub fn binomial_significance(errors_a: u64, errors_b: u64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(EvalError::InvalidBinomial("n must be at least 1".into()));
    }
    if errors_a > n || errors_b > n {
        return Err(EvalError::InvalidBinomial(format!(
            "error counts {errors_a}, {errors_b} exceed n = {n}"
        )));
    }
    if errors_b == 0 {
        return Ok(if errors_a == 0 { 1.0 } else { 0.0 });
    }
    if errors_b == n {
        return Ok(if errors_a == n { 1.0 } else { 0.0 });
    }

    let p0 = errors_b as f64 / n as f64;
    let (ln_p, ln_q) = (p0.ln(), (-p0).ln_1p());
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(0.0f64);
    let mut acc = 0.0f64;
    for k in 1..=n {
        acc += (k as f64).ln();
        ln_fact.push(acc);
    }
    let ln_pmf = |k: u64| {
        ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize]
            + k as f64 * ln_p
            + (n - k) as f64 * ln_q
    };

    // relative slack so outcomes tied with the observed one are counted
    let cutoff = ln_pmf(errors_a) + 1e-7f64.ln_1p();
    let included: Vec<f64> = (0..=n).map(ln_pmf).filter(|&l| l <= cutoff).collect();
    let peak = included.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = included.iter().map(|l| (l - peak).exp()).sum();
    Ok((peak.exp() * sum).clamp(0.0, 1.0))
}

/// Evaluation summary for one (method, distance) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub distance: String,
    pub split_threshold: f64,
    pub split_error: f64,
    pub js_divergence: f64,
    pub n_pairs: usize,
    pub n_nonpairs: usize,
    /// Misclassified couples at `split_threshold` on the reported set.
    pub n_errors: usize,
}

/// Choose the threshold on `select`, then measure error and divergence on `report`.
pub fn evaluate(
    method: &str,
    distance: &str,
    select: &ScoredCouples,
    report: &ScoredCouples,
    bins: usize,
) -> Result<EvalReport> {
    let (threshold, _) = optimal_split(select)?;
    report.check_sides()?;
    let n_errors = misclassified(report, threshold);
    Ok(EvalReport {
        method: method.to_string(),
        distance: distance.to_string(),
        split_threshold: threshold,
        split_error: n_errors as f64 / report.total() as f64,
        js_divergence: js_divergence(&report.pair_scores, &report.nonpair_scores, bins)?,
        n_pairs: report.pair_scores.len(),
        n_nonpairs: report.nonpair_scores.len(),
        n_errors,
    })
}
