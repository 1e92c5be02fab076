//! Out-of-vocabulary query words, grounded in the model vocabulary by
//! word-embedding similarity.
//!
//! Embeddings come from a text word-vector file (`<count> <dim>` header, then
//! `word v1 .. vdim` per line). A companion file of character n-gram vectors
//! lets words that are missing from the word table still get a vector: the
//! word is wrapped in `<` `>` boundary markers and the vectors of its 3- to
//! 6-character n-grams are averaged.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::table::Vocabulary;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vectors have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    words: HashMap<String, Vec<f64>>,
    subwords: Option<HashMap<String, Vec<f64>>>,
    warnings: Vec<String>,
}

fn parse_vectors(
    text: &str,
    header_required: bool,
    expected_dim: Option<usize>,
    warnings: &mut Vec<String>,
) -> Result<(usize, HashMap<String, Vec<f64>>), EmbeddingError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let parse_err = |line: usize, message: String| EmbeddingError::Parse { line: line + 1, message };

    let mut declared_count = None;
    let mut dim = expected_dim;
    if let Some(&(i, first)) = lines.peek() {
        let fields: Vec<&str> = first.split_whitespace().collect();
        let header = match fields.as_slice() {
            [count, d] => count.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        match header {
            Some((count, d)) => {
                if d == 0 {
                    return Err(parse_err(i, "dimension must be positive".into()));
                }
                if let Some(expected) = expected_dim.filter(|&e| e != d) {
                    return Err(parse_err(i, format!("dimension {d} does not match {expected}")));
                }
                declared_count = Some(count);
                dim = Some(d);
                lines.next();
            }
            None if header_required => {
                return Err(parse_err(i, "expected a `<count> <dim>` header".into()));
            }
            None => {}
        }
    }

    let mut vectors = HashMap::new();
    let mut rows = 0usize;
    for (i, line) in lines {
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line");
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(i, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(parse_err(i, format!("`{word}` has no values")));
        }
        if values.len() != d {
            return Err(parse_err(i, format!("`{word}` has {} values, expected {d}", values.len())));
        }
        rows += 1;
        if vectors.contains_key(word) {
            warnings.push(format!("line {}: duplicate `{word}` ignored", i + 1));
        } else {
            vectors.insert(word.to_string(), values);
        }
    }
    if let Some(count) = declared_count.filter(|&c| c != rows) {
        warnings.push(format!("header declares {count} vectors, file has {rows}"));
    }
    Ok((dim.unwrap_or(0), vectors))
}

fn read(path: &Path) -> Result<String, EmbeddingError> {
    fs::read_to_string(path).map_err(|e| EmbeddingError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbeddingError> {
    EmbeddingTable::parse(&read(path.as_ref())?)
}

/// Character n-grams of `<word>` for `n` in 3..=6, by Unicode scalar.
pub fn char_ngrams(word: &str) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in 3..=6 {
        if n > chars.len() {
            break;
        }
        out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    out
}

impl EmbeddingTable {
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let mut warnings = Vec::new();
        let (dim, words) = parse_vectors(text, true, None, &mut warnings)?;
        if dim == 0 {
            return Err(EmbeddingError::Parse {
                line: 1,
                message: "no dimension".into(),
            });
        }
        Ok(Self {
            dim,
            words,
            subwords: None,
            warnings,
        })
    }

    /// Adds n-gram vectors (`ngram v1 .. vdim` per line, header optional).
    pub fn with_subwords(mut self, text: &str) -> Result<Self, EmbeddingError> {
        let (_, subwords) = parse_vectors(text, false, Some(self.dim), &mut self.warnings)?;
        self.subwords = Some(subwords);
        Ok(self)
    }

    pub fn load_subwords(self, path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let text = read(path.as_ref())?;
        self.with_subwords(&text)
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

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The stored vector, else the mean of the word's known n-gram vectors.
    pub fn vector_for(&self, word: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.words.get(word) {
            return Some(v.clone());
        }
        let subwords = self.subwords.as_ref()?;
        let mut sum = vec![0.0; self.dim];
        let mut found = 0usize;
        for gram in char_ngrams(word) {
            if let Some(v) = subwords.get(&gram) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                found += 1;
            }
        }
        (found > 0).then(|| sum.into_iter().map(|s| s / found as f64).collect())
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolution {
    InVocab,
    Mapped { to: String, similarity: f64 },
    Dropped { best_similarity: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub word: String,
    #[serde(flatten)]
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct DisambiguationReport {
    pub entries: Vec<ReportEntry>,
}

impl DisambiguationReport {
    pub fn substitutions(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.entries.iter().filter_map(|e| match &e.resolution {
            Resolution::Mapped { to, similarity } => Some((e.word.as_str(), to.as_str(), *similarity)),
            _ => None,
        })
    }

    pub fn dropped(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| matches!(e.resolution, Resolution::Dropped { .. }))
            .map(|e| e.word.as_str())
    }
}

/// Replaces each out-of-vocabulary token by its most similar vocabulary word
/// when that similarity reaches `threshold`; drops it otherwise. Ties go to
/// the lowest vocabulary index. Vocabulary words without a vector are never
/// candidates.
pub fn disambiguate<S: AsRef<str>>(
    question: &[S],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    threshold: f64,
) -> (Vec<String>, DisambiguationReport) {
    let mut candidates: Option<Vec<(usize, Vec<f64>)>> = None;
    let mut mapped = Vec::with_capacity(question.len());
    let mut report = DisambiguationReport::default();
    for token in question {
        let token = token.as_ref();
        let resolution = if vocab.contains(token) {
            mapped.push(token.to_string());
            Resolution::InVocab
        } else {
            let best = table.vector_for(token).and_then(|query| {
                let cands = candidates.get_or_insert_with(|| {
                    vocab
                        .tokens()
                        .iter()
                        .enumerate()
                        .filter_map(|(i, w)| table.vector_for(w).map(|v| (i, v)))
                        .collect()
                });
                let mut best: Option<(usize, f64)> = None;
                for (i, v) in cands.iter() {
                    let sim = cosine(&query, v).unwrap_or(0.0);
                    if best.is_none_or(|(_, b)| sim > b) {
                        best = Some((*i, sim));
                    }
                }
                best
            });
            match best {
                Some((i, sim)) if sim >= threshold => {
                    let to = vocab.token(i).expect("candidate index").to_string();
                    mapped.push(to.clone());
                    Resolution::Mapped { to, similarity: sim }
                }
                other => Resolution::Dropped {
                    best_similarity: other.map(|(_, s)| s),
                },
            }
        };
        report.entries.push(ReportEntry {
            word: token.to_string(),
            resolution,
        });
    }
    (mapped, report)
}
