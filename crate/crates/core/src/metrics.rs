//! Similarity and distance functions between dense representation vectors.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numeric::exact_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("normalized distance is undefined for a zero vector")]
    ZeroVector,
    #[error("Lp order must be at least 1, got {0}")]
    InvalidOrder(u32),
    #[error("unknown distance {name:?}; valid distances: {valid}")]
    UnknownDistance { name: String, valid: String },
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Whether larger scores mean "more alike" or "further apart".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Similarity,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    Cosine,
    Euclidean,
    L3,
    L4,
    BrayCurtis,
    SquaredEuclidean,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 6] = [
        DistanceKind::Cosine,
        DistanceKind::Euclidean,
        DistanceKind::L3,
        DistanceKind::L4,
        DistanceKind::BrayCurtis,
        DistanceKind::SquaredEuclidean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Cosine => "cosine",
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::L3 => "l3",
            DistanceKind::L4 => "l4",
            DistanceKind::BrayCurtis => "braycurtis",
            DistanceKind::SquaredEuclidean => "squared_euclidean",
        }
    }

    /// Cosine is reported as a similarity, everything else as a distance.
    pub fn polarity(self) -> Polarity {
        match self {
            DistanceKind::Cosine => Polarity::Similarity,
            _ => Polarity::Distance,
        }
    }

    pub fn score(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            DistanceKind::Cosine => cosine_similarity(a, b),
            DistanceKind::Euclidean => lp_distance(a, b, 2),
            DistanceKind::L3 => lp_distance(a, b, 3),
            DistanceKind::L4 => lp_distance(a, b, 4),
            DistanceKind::BrayCurtis => bray_curtis_distance(a, b),
            DistanceKind::SquaredEuclidean => squared_euclidean(a, b),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self> {
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MetricError::UnknownDistance {
                name: s.to_string(),
                valid: DistanceKind::ALL.map(DistanceKind::name).join(", "),
            })
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

fn l2_norm(a: &[f64]) -> f64 {
    exact_sum(a.iter().map(|x| x * x)).sqrt()
}

/// `a·b / (‖a‖ ‖b‖)`; 0 if either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let dot = exact_sum(a.iter().zip(b).map(|(x, y)| x * y));
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Cosine similarity mapped onto a [0, 1] distance.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok((1.0 - cosine_similarity(a, b)?) / 2.0)
}

/// Lp distance between the unit-L2 rescaled vectors, halved so it lies in [0, 1].
pub fn lp_distance(a: &[f64], b: &[f64], p: u32) -> Result<f64> {
    check_lengths(a, b)?;
    if p == 0 {
        return Err(MetricError::InvalidOrder(p));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let pf = f64::from(p);
    let sum = exact_sum(
        a.iter()
            .zip(b)
            .map(|(x, y)| (x / na - y / nb).abs().powi(p as i32)),
    );
    Ok((sum.powf(1.0 / pf) / 2.0).clamp(0.0, 1.0))
}

/// `Σ|a−b| / Σ|a+b|`. A zero denominator gives 1, or 0 when both vectors are zero.
pub fn bray_curtis_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let num = exact_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()));
    let den = exact_sum(a.iter().zip(b).map(|(x, y)| (x + y).abs()));
    if den == 0.0 {
        let both_zero = a.iter().chain(b).all(|x| *x == 0.0);
        return Ok(if both_zero { 0.0 } else { 1.0 });
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Unnormalized `Σ (a_d − b_d)²` over vector dimensions.
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(exact_sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))))
}
