//! Text normalization and couple extraction.
//!
//! A corpus is a sequence of articles, each a sequence of paragraphs. A
//! *pair* is cut from a single paragraph: the first `n_c` tokens, a gap of
//! two tokens, then the next `n_c` tokens. A *non-pair* takes a random
//! `n_c`-token window from each of two paragraphs belonging to different
//! articles.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use unicode_general_category::get_general_category;

use crate::numeric::derive_seed;

/// Tokens between the two fragments of a pair.
pub const PAIR_GAP: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("fragment lengths differ: {first} vs {second}")]
    LengthMismatch { first: usize, second: usize },
    #[error("cannot split an empty couple set")]
    EmptyCoupleSet,
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("no paragraph is long enough to extract a pair of {0}-token fragments")]
    NoPairs(usize),
    #[error("cannot extract non-pairs: {0}")]
    NoNonpairs(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A normalized word: lowercase, punctuation-free, digit runs collapsed to `0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

impl Token {
    pub fn new(s: impl Into<String>) -> Result<Self> {
        let s = s.into();
        if s.is_empty() || s.chars().any(char::is_whitespace) || s.to_lowercase() != s {
            return Err(CorpusError::InvalidToken(s));
        }
        Ok(Token(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Ordered tokens of one side of a couple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment(Vec<Token>);

impl Fragment {
    pub fn new(tokens: Vec<Token>) -> Self {
        Fragment(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }
}

impl Deref for Fragment {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl From<Vec<Token>> for Fragment {
    fn from(tokens: Vec<Token>) -> Self {
        Fragment(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pair,
    NonPair,
}

impl Label {
    pub fn is_pair(self) -> bool {
        self == Label::Pair
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Couple {
    first: Fragment,
    second: Fragment,
    label: Label,
}

impl Couple {
    pub fn new(first: Fragment, second: Fragment, label: Label) -> Result<Self> {
        if first.len() != second.len() {
            return Err(CorpusError::LengthMismatch {
                first: first.len(),
                second: second.len(),
            });
        }
        Ok(Couple {
            first,
            second,
            label,
        })
    }

    pub fn first(&self) -> &Fragment {
        &self.first
    }

    pub fn second(&self) -> &Fragment {
        &self.second
    }

    pub fn label(&self) -> Label {
        self.label
    }

    /// Fragment length `n_c`.
    pub fn n_words(&self) -> usize {
        self.first.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Couple>,
    pub test: Vec<Couple>,
    pub validation: Vec<Couple>,
}

fn is_punctuation_or_symbol(c: char) -> bool {
    matches!(
        get_general_category(c).abbreviation().as_bytes().first(),
        Some(b'P') | Some(b'S')
    )
}

/// Lowercase, strip punctuation and symbols, collapse digit runs to `0`,
/// split on whitespace.
pub fn normalize_text(raw: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_digits = false;
    for c in raw.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token(std::mem::take(&mut current)));
            }
            in_digits = false;
        } else if is_punctuation_or_symbol(c) {
            continue;
        } else if c.is_numeric() {
            if !in_digits {
                current.push('0');
                in_digits = true;
            }
        } else {
            current.push(c);
            in_digits = false;
        }
    }
    if !current.is_empty() {
        tokens.push(Token(current));
    }
    tokens
}

/// Corpus-specific cleanup applied to raw paragraph text before
/// normalization (markup stripping and the like).
pub trait TextFilter: Sync {
    fn filter<'a>(&self, raw: &'a str) -> Cow<'a, str>;
}

/// Passes plain text through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlainText;

impl TextFilter for PlainText {
    fn filter<'a>(&self, raw: &'a str) -> Cow<'a, str> {
        Cow::Borrowed(raw)
    }
}

/// First `n_c` tokens and, after a two-token gap, the following `n_c` tokens.
pub fn extract_pair(paragraph: &[Token], n_c: usize) -> Option<Couple> {
    if n_c == 0 || paragraph.len() < 2 * n_c + PAIR_GAP {
        return None;
    }
    let first = paragraph[..n_c].to_vec();
    let second = paragraph[n_c + PAIR_GAP..2 * n_c + PAIR_GAP].to_vec();
    Some(Couple {
        first: Fragment(first),
        second: Fragment(second),
        label: Label::Pair,
    })
}

/// Uniformly placed `n_c`-token windows from two paragraphs of different
/// articles.
pub fn extract_nonpair<R: Rng + ?Sized>(
    para_a: &[Token],
    para_b: &[Token],
    n_c: usize,
    rng: &mut R,
) -> Option<Couple> {
    if n_c == 0 || para_a.len() < n_c || para_b.len() < n_c {
        return None;
    }
    let start_a = rng.random_range(0..=para_a.len() - n_c);
    let start_b = rng.random_range(0..=para_b.len() - n_c);
    Some(Couple {
        first: Fragment(para_a[start_a..start_a + n_c].to_vec()),
        second: Fragment(para_b[start_b..start_b + n_c].to_vec()),
        label: Label::NonPair,
    })
}

/// Integer allocation of `n` items over splits following `fractions`
/// (largest remainder, earlier split wins ties).
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, x) in counts.iter_mut().zip(&ideal) {
        *c = x.floor() as usize;
    }
    let mut rest = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &s in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if fractions[s] > 0.0 {
            counts[s] += 1;
            rest -= 1;
        }
    }
    counts
}

/// Stratified random partition into train / test / validation.
///
/// Split totals follow the fractions by largest remainder; each label
/// stratum receives the floor of its ideal share per split plus at most one
/// extra couple.
pub fn split_dataset<R: Rng + ?Sized>(
    couples: Vec<Couple>,
    fractions: (f64, f64, f64),
    rng: &mut R,
) -> Result<DatasetSplit> {
    if couples.is_empty() {
        return Err(CorpusError::EmptyCoupleSet);
    }
    let fr = [fractions.0, fractions.1, fractions.2];
    if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(CorpusError::InvalidFractions(format!(
            "{fractions:?} contains a negative or non-finite value"
        )));
    }
    if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidFractions(format!(
            "{fractions:?} does not sum to 1"
        )));
    }

    let (mut pairs, mut nonpairs): (Vec<Couple>, Vec<Couple>) =
        couples.into_iter().partition(|c| c.label.is_pair());
    pairs.shuffle(rng);
    nonpairs.shuffle(rng);

    let total = pairs.len() + nonpairs.len();
    let targets = apportion(total, &fr);
    let strata = [pairs.len(), nonpairs.len()];

    // Per-stratum floors, then hand out the remaining couples to the splits
    // with the largest outstanding demand.
    let mut alloc = [[0usize; 3]; 2];
    let mut demand = targets;
    for (k, &n) in strata.iter().enumerate() {
        for s in 0..3 {
            alloc[k][s] = (fr[s] * n as f64).floor() as usize;
            demand[s] = demand[s].saturating_sub(alloc[k][s]);
        }
    }
    for (k, &n) in strata.iter().enumerate() {
        let mut extra = n - alloc[k].iter().sum::<usize>();
        let mut taken = [false; 3];
        while extra > 0 {
            let s = (0..3)
                .filter(|&s| !taken[s] && fr[s] > 0.0)
                .max_by(|&a, &b| {
                    let frac = |s: usize| fr[s] * n as f64 - (fr[s] * n as f64).floor();
                    demand[a]
                        .cmp(&demand[b])
                        .then(frac(a).total_cmp(&frac(b)))
                        .then(b.cmp(&a))
                })
                .expect("a split with positive fraction exists");
            taken[s] = true;
            alloc[k][s] += 1;
            demand[s] = demand[s].saturating_sub(1);
            extra -= 1;
        }
    }

    let mut split = DatasetSplit::default();
    for (k, stratum) in [pairs, nonpairs].into_iter().enumerate() {
        let mut it = stratum.into_iter();
        split.train.extend(it.by_ref().take(alloc[k][0]));
        split.test.extend(it.by_ref().take(alloc[k][1]));
        split.validation.extend(it);
    }
    split.train.shuffle(rng);
    split.test.shuffle(rng);
    split.validation.shuffle(rng);
    Ok(split)
}

/// Articles of tokenized paragraphs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub articles: Vec<Vec<Vec<Token>>>,
}

impl Corpus {
    /// Parse one paragraph per line, articles separated by blank lines.
    pub fn read<R: BufRead>(reader: R, filter: &dyn TextFilter) -> Result<Self> {
        let mut articles = Vec::new();
        let mut current: Vec<Vec<Token>> = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                if !current.is_empty() {
                    articles.push(std::mem::take(&mut current));
                }
                continue;
            }
            current.push(normalize_text(&filter.filter(&line)));
        }
        if !current.is_empty() {
            articles.push(current);
        }
        Ok(Corpus { articles })
    }

    /// Drop every token not accepted by `keep`.
    pub fn retain_tokens<F: Fn(&Token) -> bool>(&mut self, keep: F) {
        for paragraph in self.articles.iter_mut().flatten() {
            paragraph.retain(&keep);
        }
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &[Token]> {
        self.articles.iter().flatten().map(Vec::as_slice)
    }

    pub fn paragraph_count(&self) -> usize {
        self.articles.iter().map(Vec::len).sum()
    }

    /// Write in the format accepted by [`Corpus::read`].
    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for (a, article) in self.articles.iter().enumerate() {
            if a > 0 {
                writeln!(writer)?;
            }
            for paragraph in article {
                let words: Vec<&str> = paragraph.iter().map(Token::as_str).collect();
                writeln!(writer, "{}", words.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Couples extracted from a corpus: all pairs first, then as many non-pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub couples: Vec<Couple>,
    pub n_pairs: usize,
    pub n_nonpairs: usize,
}

const PAIR_STREAM: u64 = 1;
const NONPAIR_STREAM: u64 = 2;
const MAX_ARTICLE_DRAWS: usize = 10_000;

/// Extract one pair per long-enough paragraph (optionally subsampled to
/// `max_pairs`) and an equal number of non-pairs.
pub fn extract_couples(
    corpus: &Corpus,
    n_c: usize,
    max_pairs: Option<usize>,
    seed: u64,
) -> Result<Extraction> {
    let mut pairs: Vec<(usize, Couple)> = corpus
        .paragraphs()
        .enumerate()
        .filter_map(|(i, p)| extract_pair(p, n_c).map(|c| (i, c)))
        .collect();
    if pairs.is_empty() {
        return Err(CorpusError::NoPairs(n_c));
    }
    if let Some(limit) = max_pairs {
        if pairs.len() > limit {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, PAIR_STREAM));
            pairs.shuffle(&mut rng);
            pairs.truncate(limit);
            pairs.sort_by_key(|(i, _)| *i);
        }
    }

    let eligible: Vec<(usize, &[Token])> = corpus
        .articles
        .iter()
        .enumerate()
        .flat_map(|(a, paras)| paras.iter().map(move |p| (a, p.as_slice())))
        .filter(|(_, p)| p.len() >= n_c)
        .collect();
    let articles: HashSet<usize> = eligible.iter().map(|(a, _)| *a).collect();
    if articles.len() < 2 {
        return Err(CorpusError::NoNonpairs(format!(
            "need paragraphs of at least {n_c} tokens in two different articles, found {}",
            articles.len()
        )));
    }

    let nonpair_seed = derive_seed(seed, NONPAIR_STREAM);
    let nonpairs: Vec<Couple> = (0..pairs.len())
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(nonpair_seed, k as u64));
            for _ in 0..MAX_ARTICLE_DRAWS {
                let (art_a, para_a) = eligible[rng.random_range(0..eligible.len())];
                let (art_b, para_b) = eligible[rng.random_range(0..eligible.len())];
                if art_a != art_b {
                    return extract_nonpair(para_a, para_b, n_c, &mut rng).ok_or_else(|| {
                        CorpusError::NoNonpairs("eligible paragraph too short".into())
                    });
                }
            }
            Err(CorpusError::NoNonpairs(format!(
                "no two different articles drawn in {MAX_ARTICLE_DRAWS} attempts"
            )))
        })
        .collect::<Result<_>>()?;

    let n_pairs = pairs.len();
    let n_nonpairs = nonpairs.len();
    let mut couples: Vec<Couple> = pairs.into_iter().map(|(_, c)| c).collect();
    couples.extend(nonpairs);
    Ok(Extraction {
        couples,
        n_pairs,
        n_nonpairs,
    })
}

/// Write couples as `label<TAB>text1<TAB>text2` with `1` = pair, `0` = non-pair.
pub fn write_couples<W: Write>(mut writer: W, couples: &[Couple]) -> Result<()> {
    for c in couples {
        let label = if c.label.is_pair() { '1' } else { '0' };
        writeln!(
            writer,
            "{label}\t{}\t{}",
            join_tokens(&c.first),
            join_tokens(&c.second)
        )?;
    }
    writer.flush()?;
    Ok(())
}

fn join_tokens(tokens: &[Token]) -> String {
    let words: Vec<&str> = tokens.iter().map(Token::as_str).collect();
    words.join(" ")
}

/// Read a couples TSV. Blank lines are ignored; errors carry 1-based line numbers.
pub fn read_couples<R: BufRead>(reader: R) -> Result<Vec<Couple>> {
    parse_couples(reader, None, false)
}

/// Like [`read_couples`], but every couple must have `n_words` words per
/// fragment (or, if `None`, as many as the first couple).
pub fn read_uniform_couples<R: BufRead>(reader: R, n_words: Option<usize>) -> Result<Vec<Couple>> {
    parse_couples(reader, n_words, true)
}

fn parse_couples<R: BufRead>(
    reader: R,
    mut expected: Option<usize>,
    uniform: bool,
) -> Result<Vec<Couple>> {
    let mut couples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let label = match fields[0].trim() {
            "1" => Label::Pair,
            "0" => Label::NonPair,
            other => return Err(parse_err(format!("label must be 0 or 1, got {other:?}"))),
        };
        let parse_fragment = |text: &str| -> Result<Fragment> {
            text.split_whitespace()
                .map(|w| Token::new(w).map_err(|e| parse_err(e.to_string())))
                .collect::<Result<Vec<_>>>()
                .map(Fragment)
        };
        let first = parse_fragment(fields[1])?;
        let second = parse_fragment(fields[2])?;
        if first.is_empty() {
            return Err(parse_err("empty fragment".into()));
        }
        let couple = Couple::new(first, second, label).map_err(|e| parse_err(e.to_string()))?;
        if uniform {
            let n = *expected.get_or_insert(couple.n_words());
            if couple.n_words() != n {
                return Err(parse_err(format!(
                    "expected {n} words per fragment, found {}",
                    couple.n_words()
                )));
            }
        }
        couples.push(couple);
    }
    Ok(couples)
}
