//! Learning global importance factors.
//!
//! Words of each fragment are sorted by ascending document frequency and the
//! j-th word vector is scaled by factor `i_j` before averaging. The factors
//! minimize
//!
//! ```text
//! J(i) = (1/|D|) Σ_c s_c · ‖o¹(c) − o²(c)‖² + λ Σ_j i_j²
//! ```
//!
//! where `s_c` is +1 for pairs and −1 for non-pairs, using minibatch SGD with
//! classical momentum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Couple;
use crate::embeddings::{DfTable, EmbeddingTable};
use crate::numeric::derive_seed;
use crate::represent::{df_sorted_positions, weighted_mean, RepresentError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("importance factors must be finite")]
    NonFiniteFactors,
    #[error("couple {index}: expected {expected} words per fragment, found {found}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("couple {index}: {source}")]
    Represent {
        index: usize,
        #[source]
        source: RepresentError,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged: factors became non-finite after batch {0}")]
    Diverged(usize),
    #[error("factors file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

/// Weight per df-rank position; index 0 scales the rarest word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ImportanceFactors(Vec<f64>);

impl ImportanceFactors {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFiniteFactors);
        }
        Ok(ImportanceFactors(values))
    }

    pub fn constant(n_words: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n_words])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ImportanceFactors {
    type Error = LearnError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ImportanceFactors::new(values)
    }
}

impl From<ImportanceFactors> for Vec<f64> {
    fn from(f: ImportanceFactors) -> Self {
        f.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lambda: f64,
    pub init_value: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            learning_rate: 0.1,
            momentum: 0.9,
            lambda: 0.0015,
            init_value: 0.5,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LearnError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !self.init_value.is_finite() {
            return bad(format!(
                "init_value must be finite, got {}",
                self.init_value
            ));
        }
        Ok(())
    }
}

/// Persisted form of learned factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorsFile {
    pub n_words: usize,
    pub factors: ImportanceFactors,
    pub config: TrainConfig,
}

impl FactorsFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FactorsFile = serde_json::from_str(text)?;
        if file.factors.len() != file.n_words {
            return Err(LearnError::InvalidConfig(format!(
                "n_words is {} but {} factors are listed",
                file.n_words,
                file.factors.len()
            )));
        }
        Ok(file)
    }
}

/// Embedding rows of both fragments in df-sorted order, with the loss sign.
#[derive(Debug, Clone)]
struct Prepared {
    first: Vec<usize>,
    second: Vec<usize>,
    sign: f64,
}

fn prepare(
    index: usize,
    c: &Couple,
    emb: &EmbeddingTable,
    df: &DfTable,
    n_words: usize,
) -> Result<Prepared> {
    if c.n_words() != n_words {
        return Err(LearnError::LengthMismatch {
            index,
            expected: n_words,
            found: c.n_words(),
        });
    }
    let rows = |fragment: &[crate::corpus::Token]| -> Result<Vec<usize>> {
        df_sorted_positions(fragment, df)
            .into_iter()
            .map(|p| {
                emb.row(fragment[p].as_str())
                    .ok_or_else(|| LearnError::Represent {
                        index,
                        source: RepresentError::UnknownToken(fragment[p].as_str().to_string()),
                    })
            })
            .collect()
    };
    Ok(Prepared {
        first: rows(c.first())?,
        second: rows(c.second())?,
        sign: if c.label().is_pair() { 1.0 } else { -1.0 },
    })
}

fn prepare_all(
    couples: &[Couple],
    emb: &EmbeddingTable,
    df: &DfTable,
    n_words: usize,
) -> Result<Vec<Prepared>> {
    couples
        .par_iter()
        .enumerate()
        .map(|(i, c)| prepare(i, c, emb, df, n_words))
        .collect()
}

/// Signed distance `s·‖o¹−o²‖²` and its gradient with respect to the factors.
fn couple_terms(p: &Prepared, factors: &[f64], emb: &EmbeddingTable) -> (f64, Vec<f64>) {
    let dim = emb.dim();
    let n = factors.len() as f64;
    let first: Vec<&[f64]> = p.first.iter().map(|&r| emb.vector(r)).collect();
    let second: Vec<&[f64]> = p.second.iter().map(|&r| emb.vector(r)).collect();
    let o1 = weighted_mean(&first, factors, dim);
    let o2 = weighted_mean(&second, factors, dim);
    let diff: Vec<f64> = o1
        .as_slice()
        .iter()
        .zip(o2.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let loss = p.sign * diff.iter().map(|d| d * d).sum::<f64>();
    let grad = first
        .iter()
        .zip(&second)
        .map(|(w1, w2)| {
            let proj: f64 = diff
                .iter()
                .zip(w1.iter().zip(w2.iter()))
                .map(|(d, (a, b))| d * (a - b))
                .sum();
            p.sign * 2.0 * proj / n
        })
        .collect();
    (loss, grad)
}

/// Batch objective `(1/|B|) Σ f(c) + λ Σ i²` and its gradient.
fn batch_terms(
    batch: &[&Prepared],
    factors: &[f64],
    lambda: f64,
    emb: &EmbeddingTable,
) -> (f64, Vec<f64>) {
    let terms: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|p| couple_terms(p, factors, emb))
        .collect();
    let size = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; factors.len()];
    for (l, g) in &terms {
        loss += l;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    let penalty: f64 = factors.iter().map(|i| i * i).sum();
    for (g, i) in grad.iter_mut().zip(factors) {
        *g = *g / size + 2.0 * lambda * i;
    }
    (loss / size + lambda * penalty, grad)
}

fn check_factors(factors: &ImportanceFactors, n_words: usize) -> Result<()> {
    if factors.len() != n_words {
        return Err(LearnError::Represent {
            index: 0,
            source: RepresentError::LengthMismatch {
                expected: factors.len(),
                found: n_words,
            },
        });
    }
    Ok(())
}

/// `+d(o¹, o²)` for a pair, `−d(o¹, o²)` for a non-pair, with `d` the
/// squared Euclidean distance of the importance-weighted means.
pub fn couple_loss(
    c: &Couple,
    factors: &ImportanceFactors,
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<f64> {
    check_factors(factors, c.n_words())?;
    let p = prepare(0, c, emb, df, factors.len())?;
    Ok(couple_terms(&p, factors.values(), emb).0)
}

/// Mean objective of a batch including the regularization term.
pub fn batch_objective(
    batch: &[Couple],
    factors: &ImportanceFactors,
    lambda: f64,
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    check_factors(factors, batch[0].n_words())?;
    let prepared = prepare_all(batch, emb, df, factors.len())?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    Ok(batch_terms(&refs, factors.values(), lambda, emb).0)
}

/// Gradient of the batch objective with respect to the factors:
/// `g_j = (1/|B|) Σ_c s_c · 2 (o¹−o²)·(w¹'_j − w²'_j) / n_c + 2λ i_j`.
pub fn batch_gradient(
    batch: &[Couple],
    factors: &ImportanceFactors,
    lambda: f64,
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    check_factors(factors, batch[0].n_words())?;
    let prepared = prepare_all(batch, emb, df, factors.len())?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    Ok(batch_terms(&refs, factors.values(), lambda, emb).1)
}

/// Learned factors plus the batch objective before each update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub factors: ImportanceFactors,
    pub trace: Vec<f64>,
}

pub fn train(
    train_set: &[Couple],
    config: &TrainConfig,
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<ImportanceFactors> {
    train_with_trace(train_set, config, emb, df).map(|o| o.factors)
}

/// Minibatch SGD with momentum: `v ← μ v − η g`, `i ← i + v`.
///
/// Couples are reshuffled every epoch from a seed derived from
/// `config.seed`; a trailing partial batch is used at its true size.
pub fn train_with_trace(
    train_set: &[Couple],
    config: &TrainConfig,
    emb: &EmbeddingTable,
    df: &DfTable,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n_words = train_set
        .first()
        .ok_or(LearnError::EmptyTrainingSet)?
        .n_words();
    let prepared = prepare_all(train_set, emb, df, n_words)?;

    let mut factors = vec![config.init_value; n_words];
    let mut velocity = vec![0.0; n_words];
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&k| &prepared[k]).collect();
            let (objective, grad) = batch_terms(&batch, &factors, config.lambda, emb);
            trace.push(objective);
            for ((i, v), g) in factors.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *i += *v;
            }
            if factors.iter().any(|x| !x.is_finite()) {
                return Err(LearnError::Diverged(trace.len()));
            }
        }
    }
    Ok(TrainOutcome {
        factors: ImportanceFactors(factors),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Fragment, Label, Token};
    use approx::assert_abs_diff_eq;

    fn tok(w: &str) -> Token {
        Token::new(w).unwrap()
    }

    fn couple(a: &[&str], b: &[&str], label: Label) -> Couple {
        let f = |w: &[&str]| Fragment::new(w.iter().map(|x| tok(x)).collect());
        Couple::new(f(a), f(b), label).unwrap()
    }

    fn setup() -> (EmbeddingTable, DfTable) {
        let emb = EmbeddingTable::from_entries(
            2,
            [
                ("a".to_string(), vec![1.0, 0.0]),
                ("z".to_string(), vec![0.0, 0.0]),
                ("b".to_string(), vec![0.3, -1.2]),
            ],
        )
        .unwrap();
        let df = DfTable::from_counts(
            10,
            [
                ("a".to_string(), 2),
                ("z".to_string(), 5),
                ("b".to_string(), 1),
            ],
        )
        .unwrap();
        (emb, df)
    }

    #[test]
    fn couple_loss_examples() {
        let (emb, df) = setup();
        let one = ImportanceFactors::new(vec![1.0]).unwrap();
        assert_eq!(
            couple_loss(&couple(&["a"], &["a"], Label::Pair), &one, &emb, &df).unwrap(),
            0.0
        );
        assert_eq!(
            couple_loss(&couple(&["a"], &["a"], Label::NonPair), &one, &emb, &df).unwrap(),
            0.0
        );
        assert_eq!(
            couple_loss(&couple(&["a"], &["z"], Label::Pair), &one, &emb, &df).unwrap(),
            1.0
        );
        assert_eq!(
            couple_loss(&couple(&["a"], &["z"], Label::NonPair), &one, &emb, &df).unwrap(),
            -1.0
        );

        let two = ImportanceFactors::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            couple_loss(&couple(&["a"], &["z"], Label::Pair), &two, &emb, &df),
            Err(LearnError::Represent {
                source: RepresentError::LengthMismatch { .. },
                ..
            })
        ));
    }

    #[test]
    fn gradient_examples() {
        let (emb, df) = setup();
        let half = ImportanceFactors::new(vec![0.5]).unwrap();
        let g = batch_gradient(
            &[couple(&["a"], &["z"], Label::Pair)],
            &half,
            0.0,
            &emb,
            &df,
        )
        .unwrap();
        assert_eq!(g, vec![1.0]);

        let factors = ImportanceFactors::new(vec![0.7, -0.2]).unwrap();
        let same = vec![
            couple(&["a", "b"], &["b", "a"], Label::Pair),
            couple(&["z", "b"], &["z", "b"], Label::NonPair),
        ];
        let g = batch_gradient(&same, &factors, 0.0015, &emb, &df).unwrap();
        assert_eq!(g, vec![2.0 * 0.0015 * 0.7, 2.0 * 0.0015 * -0.2]);

        assert!(matches!(
            batch_gradient(&[], &factors, 0.0, &emb, &df),
            Err(LearnError::EmptyBatch)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (emb, df) = setup();
        let batch = vec![
            couple(&["a", "b", "z"], &["b", "z", "z"], Label::Pair),
            couple(&["a", "a", "b"], &["z", "b", "b"], Label::NonPair),
        ];
        let base = vec![0.4, -0.3, 1.1];
        let lambda = 0.0015;
        let g = batch_gradient(
            &batch,
            &ImportanceFactors::new(base.clone()).unwrap(),
            lambda,
            &emb,
            &df,
        )
        .unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut up = base.clone();
            up[j] += h;
            let mut down = base.clone();
            down[j] -= h;
            let f = |v: Vec<f64>| {
                batch_objective(
                    &batch,
                    &ImportanceFactors::new(v).unwrap(),
                    lambda,
                    &emb,
                    &df,
                )
                .unwrap()
            };
            let fd = (f(up) - f(down)) / (2.0 * h);
            assert_abs_diff_eq!(g[j], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn single_step_with_zero_data_gradient() {
        let (emb, df) = setup();
        let set = vec![couple(&["a", "b"], &["a", "b"], Label::Pair); 5];
        let f = train(&set, &TrainConfig::default(), &emb, &df).unwrap();
        for v in f.values() {
            assert_eq!(*v, 0.49985);
        }
    }

    #[test]
    fn zero_epochs_keep_initial_value() {
        let (emb, df) = setup();
        let set = vec![couple(&["a", "b"], &["z", "b"], Label::Pair)];
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let f = train(&set, &config, &emb, &df).unwrap();
        assert_eq!(f.values(), &[0.5, 0.5]);
    }

    #[test]
    fn one_update_per_epoch_when_batch_covers_set() {
        let (emb, df) = setup();
        let set = vec![
            couple(&["a", "b"], &["z", "b"], Label::Pair),
            couple(&["a", "z"], &["b", "b"], Label::NonPair),
            couple(&["b", "z"], &["a", "z"], Label::Pair),
        ];
        let config = TrainConfig {
            batch_size: 3,
            epochs: 4,
            ..TrainConfig::default()
        };
        let out = train_with_trace(&set, &config, &emb, &df).unwrap();
        assert_eq!(out.trace.len(), 4);
        let config = TrainConfig {
            batch_size: 2,
            epochs: 1,
            ..TrainConfig::default()
        };
        assert_eq!(
            train_with_trace(&set, &config, &emb, &df)
                .unwrap()
                .trace
                .len(),
            2
        );
    }

    #[test]
    fn regularization_alone_decays_monotonically() {
        let (emb, df) = setup();
        let set = vec![couple(&["a", "b"], &["b", "a"], Label::NonPair); 3];
        // Overdamped regime: (1 + momentum - 2·lr·lambda)² ≥ 4·momentum.
        for lambda in [0.0015, 0.01] {
            let mut prev: Vec<f64> = vec![0.5, 0.5];
            for epochs in 1..60 {
                let config = TrainConfig {
                    batch_size: 3,
                    epochs,
                    lambda,
                    ..TrainConfig::default()
                };
                let f = train(&set, &config, &emb, &df).unwrap();
                for (v, p) in f.values().iter().zip(&prev) {
                    assert!(
                        v.abs() < p.abs() && *v > 0.0,
                        "lambda {lambda} epoch {epochs}: {v} vs {p}"
                    );
                }
                prev = f.values().to_vec();
            }
        }
    }

    #[test]
    fn rejects_mixed_lengths_and_bad_config() {
        let (emb, df) = setup();
        let set = vec![
            couple(&["a", "b"], &["z", "b"], Label::Pair),
            couple(&["a"], &["b"], Label::NonPair),
        ];
        assert!(matches!(
            train(&set, &TrainConfig::default(), &emb, &df),
            Err(LearnError::LengthMismatch {
                index: 1,
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            train(&[], &TrainConfig::default(), &emb, &df),
            Err(LearnError::EmptyTrainingSet)
        ));
        let bad = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&set[..1], &bad, &emb, &df),
            Err(LearnError::InvalidConfig(_))
        ));
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&set[..1], &bad, &emb, &df),
            Err(LearnError::InvalidConfig(_))
        ));
    }

    #[test]
    fn factors_file_roundtrip() {
        let file = FactorsFile {
            n_words: 3,
            factors: ImportanceFactors::new(vec![0.9, 0.25, -0.001]).unwrap(),
            config: TrainConfig {
                seed: 42,
                ..TrainConfig::default()
            },
        };
        let json = file.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["n_words"], 3);
        assert_eq!(value["config"]["batch_size"], 100);
        assert_eq!(value["config"]["lambda"], 0.0015);
        assert_eq!(FactorsFile::from_json(&json).unwrap(), file);
        assert!(FactorsFile::from_json(&json.replace("\"n_words\": 3", "\"n_words\": 4")).is_err());
    }

    proptest::proptest! {
        #[test]
        fn factors_json_is_bit_exact(values in proptest::collection::vec(-1e3f64..1e3, 1..30), seed: u64) {
            let file = FactorsFile {
                n_words: values.len(),
                factors: ImportanceFactors::new(values).unwrap(),
                config: TrainConfig { seed, ..TrainConfig::default() },
            };
            let back = FactorsFile::from_json(&file.to_json().unwrap()).unwrap();
            let bits = |f: &FactorsFile| f.factors.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            proptest::prop_assert_eq!(bits(&back), bits(&file));
            proptest::prop_assert_eq!(back.config, file.config);
        }
    }
}
