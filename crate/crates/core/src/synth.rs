//! Synthetic topic corpora with matching embeddings.
//!
//! Every article is one topic. A topic owns a handful of rare words whose
//! vectors cluster around a topic center; all articles share a small set of
//! frequent filler words with unrelated random vectors. Each paragraph draws
//! its own topic-word density, so fragments carry anywhere from almost no
//! topical signal to a lot of it.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Corpus, Token};
use crate::embeddings::EmbeddingTable;
use crate::numeric::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub topics: usize,
    pub paragraphs_per_topic: usize,
    pub paragraph_len: usize,
    pub words_per_topic: usize,
    pub filler_words: usize,
    /// Per-paragraph topic-word probability is uniform on this range.
    pub topic_density: (f64, f64),
    pub dim: usize,
    pub center_scale: f64,
    pub topic_noise: f64,
    pub filler_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 500,
            paragraphs_per_topic: 30,
            paragraph_len: 42,
            words_per_topic: 5,
            filler_words: 15,
            topic_density: (0.05, 0.45),
            dim: 16,
            center_scale: 0.1,
            topic_noise: 0.06,
            filler_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub embeddings: EmbeddingTable,
}

/// Bijective base-26 spelling using letters only, so names survive
/// normalization (digits would collapse to "0").
fn letters(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn topic_word(topic: usize, k: usize) -> String {
    format!("t{}w{}", letters(topic), letters(k))
}

pub fn filler_word(k: usize) -> String {
    format!("f{}", letters(k))
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Generate a corpus and embeddings. Deterministic given `config.seed`.
///
/// Filler words follow a Zipf-like frequency profile so their document
/// frequencies differ from one another.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    assert!(
        config.words_per_topic >= 1 && config.filler_words >= 1,
        "empty vocabulary"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let mut entries = Vec::new();
    for k in 0..config.filler_words {
        entries.push((
            filler_word(k),
            gaussian(&mut rng, config.filler_scale, config.dim),
        ));
    }
    for t in 0..config.topics {
        let center = gaussian(&mut rng, config.center_scale, config.dim);
        for k in 0..config.words_per_topic {
            let noise = gaussian(&mut rng, config.topic_noise, config.dim);
            let v = center.iter().zip(&noise).map(|(c, e)| c + e).collect();
            entries.push((topic_word(t, k), v));
        }
    }
    let embeddings =
        EmbeddingTable::from_entries(config.dim, entries).expect("unique synthetic words");

    let filler_dist = WeightedIndex::new((0..config.filler_words).map(|k| 1.0 / (k + 1) as f64))
        .expect("positive weights");
    let token = |w: String| Token::new(w).expect("synthetic words are valid tokens");
    let fillers: Vec<Token> = (0..config.filler_words)
        .map(|k| token(filler_word(k)))
        .collect();
    let (lo, hi) = config.topic_density;
    let articles = (0..config.topics)
        .map(|t| {
            let own: Vec<Token> = (0..config.words_per_topic)
                .map(|k| token(topic_word(t, k)))
                .collect();
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(config.seed, 1), t as u64));
            (0..config.paragraphs_per_topic)
                .map(|_| {
                    let density = if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    };
                    (0..config.paragraph_len)
                        .map(|_| {
                            if rng.random_bool(density) {
                                own[rng.random_range(0..own.len())].clone()
                            } else {
                                fillers[filler_dist.sample(&mut rng)].clone()
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    SynthCorpus {
        corpus: Corpus { articles },
        embeddings,
    }
}
