//! Pretrained word vectors and document-frequency statistics.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::Token;
use crate::numeric::format_sig9;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: malformed header: {message}")]
    MalformedHeader { line: usize, message: String },
    #[error("line {line}: dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid value {value:?}")]
    InvalidValue { line: usize, value: String },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("expected {expected} vectors, found {found}")]
    VocabularySize { expected: usize, found: usize },
    #[error("line {line}: malformed document-frequency entry: {message}")]
    MalformedDf { line: usize, message: String },
    #[error("document frequency table needs at least one document")]
    NoDocuments,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// Word vectors of a fixed dimensionality, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Build from `(word, vector)` entries. Every vector must have `dim`
    /// finite components and words must be unique.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (i, (word, vector)) in entries.into_iter().enumerate() {
            table.push(i + 1, word, &vector)?;
        }
        if table.words.is_empty() || dim == 0 {
            return Err(EmbeddingError::MalformedHeader {
                line: 1,
                message: "empty vocabulary or zero dimension".into(),
            });
        }
        Ok(table)
    }

    fn push(&mut self, line: usize, word: String, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(EmbeddingError::InvalidValue {
                line,
                value: bad.to_string(),
            });
        }
        if self.index.contains_key(&word) {
            return Err(EmbeddingError::DuplicateWord { line, word });
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.row(word).map(|r| self.vector(r))
    }

    /// Vector by row index.
    pub fn vector(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Words in file order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Parse the word2vec text format: a `<vocab> <dim>` header, then one
    /// `word v1 .. v_dim` line per word.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(EmbeddingError::MalformedHeader {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed: Option<(usize, usize)> = match fields.as_slice() {
            [v, d] => v.parse().ok().zip(d.parse().ok()),
            _ => None,
        };
        let (vocab, dim) = match parsed {
            Some((v, d)) if v > 0 && d > 0 => (v, d),
            _ => {
                return Err(EmbeddingError::MalformedHeader {
                    line: 1,
                    message: format!(
                        "expected `<vocab> <dim>` with positive counts, got {header:?}"
                    ),
                })
            }
        };

        let mut table = EmbeddingTable {
            dim,
            words: Vec::with_capacity(vocab),
            index: HashMap::with_capacity(vocab),
            data: Vec::with_capacity(vocab * dim),
        };
        let mut vector = Vec::with_capacity(dim);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts
                .next()
                .expect("non-blank line has a field")
                .to_string();
            vector.clear();
            for value in parts {
                let x: f64 = value.parse().map_err(|_| EmbeddingError::InvalidValue {
                    line: lineno,
                    value: value.to_string(),
                })?;
                vector.push(x);
            }
            if table.words.len() == vocab {
                return Err(EmbeddingError::VocabularySize {
                    expected: vocab,
                    found: vocab + 1,
                });
            }
            table.push(lineno, word, &vector)?;
        }
        if table.words.len() != vocab {
            return Err(EmbeddingError::VocabularySize {
                expected: vocab,
                found: table.words.len(),
            });
        }
        Ok(table)
    }

    /// Write in word2vec text format with 9 significant digits per value.
    pub fn write_text<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dim)?;
        for (row, word) in self.words.iter().enumerate() {
            write!(writer, "{word}")?;
            for x in self.vector(row) {
                write!(writer, " {}", format_sig9(*x))?;
            }
            writeln!(writer)?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path)?;
    EmbeddingTable::read_text(std::io::BufReader::new(file))
}

/// Document frequencies over a corpus of `doc_count` documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfTable {
    doc_count: u64,
    df: HashMap<String, u64>,
}

impl DfTable {
    /// Build directly from counts. Every df must lie in `1..=doc_count`.
    pub fn from_counts<I>(doc_count: u64, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        if doc_count == 0 {
            return Err(EmbeddingError::NoDocuments);
        }
        let mut df = HashMap::new();
        for (word, n) in counts {
            if n == 0 || n > doc_count {
                return Err(EmbeddingError::MalformedDf {
                    line: 0,
                    message: format!("df({word}) = {n} outside 1..={doc_count}"),
                });
            }
            df.insert(word, n);
        }
        Ok(DfTable { doc_count, df })
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    /// Stored document frequency, if the word was seen.
    pub fn get(&self, word: &str) -> Option<u64> {
        self.df.get(word).copied()
    }

    /// Document frequency with unseen words treated as df = 1.
    pub fn df(&self, word: &str) -> u64 {
        self.get(word).unwrap_or(1)
    }

    /// `ln(N / df)`; unseen words get the maximal value `ln N`.
    pub fn idf(&self, word: &str) -> f64 {
        (self.doc_count as f64 / self.df(word) as f64).ln()
    }

    /// Persist as `#docs<TAB>N` followed by `word<TAB>df` lines sorted by word.
    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "#docs\t{}", self.doc_count)?;
        let sorted: BTreeMap<&String, &u64> = self.df.iter().collect();
        for (word, n) in sorted {
            writeln!(writer, "{word}\t{n}")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let doc_count = header
            .strip_prefix("#docs\t")
            .and_then(|n| n.trim().parse::<u64>().ok())
            .ok_or_else(|| EmbeddingError::MalformedDf {
                line: 1,
                message: format!("expected `#docs<TAB>N` header, got {header:?}"),
            })?;
        if doc_count == 0 {
            return Err(EmbeddingError::NoDocuments);
        }
        let mut df = HashMap::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| EmbeddingError::MalformedDf {
                line: lineno,
                message,
            };
            let (word, n) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `word<TAB>df`".into()))?;
            let n: u64 = n
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid count {n:?}")))?;
            if n == 0 || n > doc_count {
                return Err(bad(format!("df {n} outside 1..={doc_count}")));
            }
            if df.insert(word.to_string(), n).is_some() {
                return Err(bad(format!("duplicate word {word:?}")));
            }
        }
        Ok(DfTable { doc_count, df })
    }
}

/// Count, for every word, the number of documents containing it at least once.
pub fn compute_document_frequencies<I, D>(documents: I) -> Result<DfTable>
where
    I: IntoIterator<Item = D>,
    D: AsRef<[Token]>,
{
    let mut doc_count = 0u64;
    let mut df: HashMap<String, u64> = HashMap::new();
    for doc in documents {
        doc_count += 1;
        let doc = doc.as_ref();
        let mut seen = std::collections::HashSet::with_capacity(doc.len());
        for token in doc {
            if seen.insert(token.as_str()) {
                *df.entry(token.as_str().to_string()).or_insert(0) += 1;
            }
        }
    }
    if doc_count == 0 {
        return Err(EmbeddingError::NoDocuments);
    }
    Ok(DfTable { doc_count, df })
}

/// Free-function form of [`DfTable::idf`].
pub fn idf(word: &Token, table: &DfTable) -> f64 {
    table.idf(word.as_str())
}
