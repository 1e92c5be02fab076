//! Tables, triples, vocabularies and bag-of-words encoding.
//!
//! A [`Table`] is decomposed into row-column-value [`Triple`]s, one per cell,
//! in row-major order. Row identity survives the decomposition as a literal
//! `row<i>` token, so several tables (or several rows with equal values) can
//! share a memory without losing which cells belong together.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::PerturbationType;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TableError {
    #[error("table has no columns")]
    NoColumns,
    #[error("column `{0}` appears more than once")]
    DuplicateColumn(String),
    #[error("row {row} is missing a value for column `{column}`")]
    MissingCell { row: usize, column: String },
    #[error("row {row} has {found} values but the table has {expected} columns")]
    ExtraCells {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cell is empty after normalization")]
    EmptyCell { row: usize, column: String },
    #[error("column name {index} is empty after normalization")]
    EmptyColumn { index: usize },
    #[error("`{0}` is not a row identifier (expected row<positive integer>)")]
    BadRowId(String),
    #[error("triples do not form a complete table: {0}")]
    Incomplete(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
}

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from each piece. Internal underscores (and other internal punctuation)
/// are kept, pieces that strip to nothing are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| {
            piece
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Normalizes a header or cell to a single token: multiword text is
/// tokenized and re-joined with underscores (`"Emigration Total"` becomes
/// `emigration_total`).
pub fn normalize_token(text: &str) -> String {
    tokenize(text).join("_")
}

pub fn row_id(index: usize) -> String {
    format!("row{}", index + 1)
}

/// Parses `row<i>` into the zero-based row index.
pub fn parse_row_id(token: &str) -> Result<usize, TableError> {
    token
        .strip_prefix("row")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1 && !token[3..].starts_with('0'))
        .map(|n| n - 1)
        .ok_or_else(|| TableError::BadRowId(token.to_string()))
}

/// A table with single-token column names and cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TryFrom<RawTable> for Table {
    type Error = TableError;

    fn try_from(raw: RawTable) -> Result<Self, Self::Error> {
        Table::new(raw.columns, raw.rows)
    }
}

impl From<Table> for RawTable {
    fn from(t: Table) -> Self {
        RawTable {
            columns: t.columns,
            rows: t.rows,
        }
    }
}

impl Table {
    /// Builds a table, normalizing every header and cell to one token.
    /// Each row must have exactly one value per column.
    pub fn new<S: AsRef<str>>(columns: Vec<S>, rows: Vec<Vec<S>>) -> Result<Self, TableError> {
        if columns.is_empty() {
            return Err(TableError::NoColumns);
        }
        let columns: Vec<String> = columns.iter().map(|c| normalize_token(c.as_ref())).collect();
        let mut seen = BTreeSet::new();
        for (index, c) in columns.iter().enumerate() {
            if c.is_empty() {
                return Err(TableError::EmptyColumn { index });
            }
            if !seen.insert(c.as_str()) {
                return Err(TableError::DuplicateColumn(c.clone()));
            }
        }
        let mut normalized = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() < columns.len() {
                return Err(TableError::MissingCell {
                    row: r + 1,
                    column: columns[row.len()].clone(),
                });
            }
            if row.len() > columns.len() {
                return Err(TableError::ExtraCells {
                    row: r + 1,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
            let cells: Vec<String> = row.iter().map(|v| normalize_token(v.as_ref())).collect();
            if let Some(c) = cells.iter().position(String::is_empty) {
                return Err(TableError::EmptyCell {
                    row: r + 1,
                    column: columns[c].clone(),
                });
            }
            normalized.push(cells);
        }
        Ok(Self {
            columns,
            rows: normalized,
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let c = self.column_index(column)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }

    /// Row-major decomposition: row 1's cells in column order, then row 2, ...
    pub fn to_triples(&self) -> Vec<Triple> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| {
                let id = row_id(r);
                self.columns.iter().zip(row).map(move |(c, v)| Triple {
                    row_id: id.clone(),
                    column: c.clone(),
                    value: v.clone(),
                })
            })
            .collect()
    }

    /// Inverse of [`Table::to_triples`]. Column order is first-appearance
    /// order; every row must define every column exactly once.
    pub fn from_triples(triples: &[Triple]) -> Result<Self, TableError> {
        let mut columns: Vec<String> = Vec::new();
        let mut cells: HashMap<(usize, String), String> = HashMap::new();
        let mut n_rows = 0;
        for t in triples {
            let r = parse_row_id(&t.row_id)?;
            n_rows = n_rows.max(r + 1);
            if !columns.contains(&t.column) {
                columns.push(t.column.clone());
            }
            if cells
                .insert((r, t.column.clone()), t.value.clone())
                .is_some()
            {
                return Err(TableError::Incomplete(format!(
                    "{} defines `{}` twice",
                    t.row_id, t.column
                )));
            }
        }
        if columns.is_empty() {
            return Err(TableError::NoColumns);
        }
        let mut rows = Vec::with_capacity(n_rows);
        for r in 0..n_rows {
            let mut row = Vec::with_capacity(columns.len());
            for c in &columns {
                match cells.remove(&(r, c.clone())) {
                    Some(v) => row.push(v),
                    None => {
                        return Err(TableError::MissingCell {
                            row: r + 1,
                            column: c.clone(),
                        })
                    }
                }
            }
            rows.push(row);
        }
        Table::new(columns, rows)
    }
}

/// One memory slot: `(row_id, column, value)`. Serialized as a 3-element array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[String; 3]", into = "[String; 3]")]
pub struct Triple {
    pub row_id: String,
    pub column: String,
    pub value: String,
}

impl Triple {
    pub fn new(row_id: impl Into<String>, column: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            row_id: row_id.into(),
            column: column.into(),
            value: value.into(),
        }
    }

    pub fn tokens(&self) -> [&str; 3] {
        [&self.row_id, &self.column, &self.value]
    }
}

impl From<[String; 3]> for Triple {
    fn from([row_id, column, value]: [String; 3]) -> Self {
        Self {
            row_id,
            column,
            value,
        }
    }
}

impl From<Triple> for [String; 3] {
    fn from(t: Triple) -> Self {
        [t.row_id, t.column, t.value]
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.row_id, self.column, self.value)
    }
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

/// A training or evaluation unit: memory triples, a tokenized question and a
/// single-token answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub triples: Vec<Triple>,
    pub question: Vec<String>,
    pub answer: String,
    /// False for questions whose answer is not in the table.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub adequate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationType>,
}

impl Example {
    pub fn new(triples: Vec<Triple>, question: Vec<String>, answer: impl Into<String>) -> Self {
        Self {
            triples,
            question,
            answer: answer.into(),
            adequate: true,
            perturbation: None,
        }
    }

    pub fn from_table(table: &Table, question: &str, answer: &str) -> Self {
        Self::new(table.to_triples(), tokenize(question), normalize_token(answer))
    }

    fn validate(&self) -> Result<(), String> {
        if self.triples.is_empty() {
            return Err("example has no triples".into());
        }
        if self.adequate && !self.triples.iter().any(|t| t.value == self.answer) {
            return Err(format!("answer `{}` is not a cell of the table", self.answer));
        }
        Ok(())
    }

    /// All tokens that enter the vocabulary: triples, question and, for
    /// adequate examples, the answer.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.triples
            .iter()
            .flat_map(|t| t.tokens())
            .chain(self.question.iter().map(String::as_str))
            .chain(self.adequate.then_some(self.answer.as_str()))
    }
}

/// Bijective token/index map in lexicographic token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = tokens.into_iter().map(Into::into).collect();
        let tokens: Vec<String> = set.into_iter().collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Deduplicated union of every token in the examples. Order-insensitive.
pub fn build_vocabulary(examples: &[Example]) -> Vocabulary {
    Vocabulary::from_tokens(examples.iter().flat_map(Example::tokens))
}

/// Dense token-count vector over a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowVector {
    counts: Vec<u32>,
}

impl BowVector {
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// `(index, count)` pairs for the non-zero entries, ascending by index.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub bow: BowVector,
    /// Out-of-vocabulary tokens, in input order.
    pub skipped: Vec<String>,
}

pub fn encode_bow<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Encoded {
    let mut counts = vec![0u32; vocab.len()];
    let mut skipped = Vec::new();
    for t in tokens {
        match vocab.index(t.as_ref()) {
            Some(i) => counts[i] += 1,
            None => skipped.push(t.as_ref().to_string()),
        }
    }
    Encoded {
        bow: BowVector { counts },
        skipped,
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>, DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_example_line(&line, i + 1)?);
    }
    Ok(out)
}

pub fn parse_example_line(line: &str, line_no: usize) -> Result<Example, DatasetError> {
    let example: Example = serde_json::from_str(line).map_err(|source| DatasetError::Json {
        line: line_no,
        source,
    })?;
    example.validate().map_err(|reason| DatasetError::Invalid {
        line: line_no,
        reason,
    })?;
    Ok(example)
}

pub fn to_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("examples always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(to_jsonl(examples).as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}
