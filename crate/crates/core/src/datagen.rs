//! Seeded, templated generation of table question-answering data.
//!
//! Two tasks are supported:
//!
//! * **simple key**: one key column whose values are pairwise distinct within
//!   each table; the question names the target column and the key value.
//! * **composite key**: two key columns. The targeted row shares its first key
//!   with another row and its second key with another row, so neither column
//!   alone identifies it and the model has to attend to both.
//!
//! Value domains, templates and the shape of each table come from a
//! [`GenerationSpec`]. Everything is reproducible from `spec.seed`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::table::{Example, Table};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatagenError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("key column `{column}` needs {needed} distinct values but its domain has {available}")]
    DomainTooSmall {
        column: String,
        needed: usize,
        available: usize,
    },
    #[error("composite-key tables need at least 3 rows to overlap on both keys, got {0}")]
    CompositeTooSmall(usize),
    #[error("template `{template}` has {slots} key slot(s) but {keys} key(s) were given")]
    SlotMismatch {
        template: String,
        slots: usize,
        keys: usize,
    },
    #[error("template `{0}`: {1}")]
    BadTemplate(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[serde(alias = "simple")]
    SimpleKey,
    #[serde(alias = "composite")]
    CompositeKey,
}

impl Task {
    pub fn key_count(self) -> usize {
        match self {
            Task::SimpleKey => 1,
            Task::CompositeKey => 2,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::SimpleKey => "Simple key",
            Task::CompositeKey => "Composite key",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub domain: Vec<String>,
}

impl ColumnSpec {
    pub fn new<S: Into<String>>(name: &str, domain: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.to_string(),
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }
}

/// A question pattern over tokens, with a `{column}` slot and one key slot
/// per key column (`{key}` is shorthand for `{key1}`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionTemplate {
    pub pattern: String,
}

enum Piece<'a> {
    Word(&'a str),
    Column,
    Key(usize),
}

impl QuestionTemplate {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
        }
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, DatagenError> {
        let bad = |msg: String| DatagenError::BadTemplate(self.pattern.clone(), msg);
        let pieces = self
            .pattern
            .split_whitespace()
            .map(|word| match word.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                None if word.contains(['{', '}']) => Err(bad(format!("malformed slot `{word}`"))),
                None => Ok(Piece::Word(word)),
                Some("column") => Ok(Piece::Column),
                Some("key") => Ok(Piece::Key(0)),
                Some(slot) => slot
                    .strip_prefix("key")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .map(|n| Piece::Key(n - 1))
                    .ok_or_else(|| bad(format!("unknown slot `{{{slot}}}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let columns = pieces.iter().filter(|p| matches!(p, Piece::Column)).count();
        if columns != 1 {
            return Err(bad(format!("expected one {{column}} slot, found {columns}")));
        }
        let mut keys: Vec<usize> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Key(k) => Some(*k),
                _ => None,
            })
            .collect();
        keys.sort_unstable();
        if keys.iter().enumerate().any(|(i, &k)| i != k) {
            return Err(bad("key slots must be {key1}..{keyN}, each exactly once".into()));
        }
        Ok(pieces)
    }

    pub fn key_slots(&self) -> Result<usize, DatagenError> {
        Ok(self
            .pieces()?
            .iter()
            .filter(|p| matches!(p, Piece::Key(_)))
            .count())
    }

    /// Fills the slots, producing lowercase tokens.
    pub fn render(&self, column: &str, keys: &[&str]) -> Result<Vec<String>, DatagenError> {
        let pieces = self.pieces()?;
        let slots = pieces.iter().filter(|p| matches!(p, Piece::Key(_))).count();
        if slots != keys.len() {
            return Err(DatagenError::SlotMismatch {
                template: self.pattern.clone(),
                slots,
                keys: keys.len(),
            });
        }
        Ok(pieces
            .iter()
            .map(|p| match p {
                Piece::Word(w) => w.to_lowercase(),
                Piece::Column => column.to_string(),
                Piece::Key(k) => keys[*k].to_string(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub task: Task,
    pub columns: Vec<ColumnSpec>,
    /// Key columns, in the order their values fill `{key1}`, `{key2}`.
    pub key_columns: Vec<String>,
    /// Column that is never targeted by generated questions, kept back for
    /// the unseen-column evaluation.
    pub reserved_column: Option<String>,
    pub n_values_per_column: usize,
    pub rows_per_table: usize,
    pub n_examples: usize,
    pub seed: u64,
    pub templates: Vec<QuestionTemplate>,
}

fn numbered(start: u32, step: u32) -> Vec<String> {
    (0..10).map(|i| (start + i * step).to_string()).collect()
}

/// Column layout of the Austrian migration table the data is modeled on.
/// Value domains are pairwise disjoint, so a cell token identifies its column.
pub fn default_columns() -> Vec<ColumnSpec> {
    vec![
        ColumnSpec::new(
            "city",
            [
                "vienna",
                "graz",
                "linz",
                "salzburg",
                "innsbruck",
                "klagenfurt",
                "villach",
                "wels",
                "st_poelten",
                "dornbirn",
            ],
        ),
        ColumnSpec::new("year", numbered(2008, 1)),
        ColumnSpec::new("immigration", numbered(110, 20)),
        ColumnSpec::new("emigration_total", numbered(100, 20)),
        ColumnSpec::new("births", numbered(310, 10)),
    ]
}

impl GenerationSpec {
    pub fn default_for(task: Task) -> Self {
        let (key_columns, templates) = match task {
            Task::SimpleKey => (
                vec!["city".to_string()],
                vec![
                    QuestionTemplate::new("what is the {column} in {key}"),
                    QuestionTemplate::new("what was the {column} for {key}"),
                ],
            ),
            Task::CompositeKey => (
                vec!["city".to_string(), "year".to_string()],
                vec![
                    QuestionTemplate::new("what was the {column} in {key1} in {key2}"),
                    QuestionTemplate::new("what is the {column} for {key1} in {key2}"),
                ],
            ),
        };
        Self {
            task,
            columns: default_columns(),
            key_columns,
            reserved_column: Some("emigration_total".to_string()),
            n_values_per_column: 10,
            rows_per_table: 4,
            n_examples: 1000,
            seed: 1,
            templates,
        }
    }

    pub fn with_examples(mut self, n_examples: usize, seed: u64) -> Self {
        self.n_examples = n_examples;
        self.seed = seed;
        self
    }

    fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// The first `n_values_per_column` values of a column's domain.
    pub fn domain(&self, name: &str) -> Option<&[String]> {
        self.column(name)
            .map(|c| &c.domain[..self.n_values_per_column.min(c.domain.len())])
    }

    pub fn is_key(&self, column: &str) -> bool {
        self.key_columns.iter().any(|k| k == column)
    }

    /// Columns generated questions may target: non-key and not reserved.
    pub fn target_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .map(|c| c.name.as_str())
            .filter(|c| !self.is_key(c) && self.reserved_column.as_deref() != Some(*c))
            .collect()
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let invalid = |m: String| Err(DatagenError::InvalidSpec(m));
        if self.templates.len() < 2 {
            return invalid(format!("need at least 2 templates, got {}", self.templates.len()));
        }
        if self.n_examples == 0 {
            return invalid("n_examples must be positive".into());
        }
        if self.rows_per_table == 0 {
            return invalid("rows_per_table must be positive".into());
        }
        if self.n_values_per_column == 0 {
            return invalid("n_values_per_column must be positive".into());
        }
        if self.key_columns.len() != self.task.key_count() {
            return invalid(format!(
                "{} task needs exactly {} key column(s), got {}",
                self.task,
                self.task.key_count(),
                self.key_columns.len()
            ));
        }
        let mut names = BTreeSet::new();
        let mut values = BTreeSet::new();
        for c in &self.columns {
            if !names.insert(c.name.as_str()) {
                return invalid(format!("column `{}` listed twice", c.name));
            }
            if c.domain.len() < self.n_values_per_column {
                return invalid(format!(
                    "column `{}` has {} values, n_values_per_column is {}",
                    c.name,
                    c.domain.len(),
                    self.n_values_per_column
                ));
            }
            for v in self.domain(&c.name).unwrap_or_default() {
                if !values.insert(v.as_str()) {
                    return invalid(format!("value `{v}` appears in more than one domain slot"));
                }
            }
        }
        if let Some(shared) = names.intersection(&values).next() {
            return invalid(format!("`{shared}` is both a column name and a value"));
        }
        for k in &self.key_columns {
            if self.column(k).is_none() {
                return invalid(format!("key column `{k}` is not defined"));
            }
        }
        if self.key_columns.len() == 2 && self.key_columns[0] == self.key_columns[1] {
            return invalid("the two key columns must differ".into());
        }
        if let Some(r) = &self.reserved_column {
            if self.column(r).is_none() {
                return invalid(format!("reserved column `{r}` is not defined"));
            }
            if self.is_key(r) {
                return invalid(format!("reserved column `{r}` is a key column"));
            }
        }
        if self.target_columns().is_empty() {
            return invalid("no column is left for questions to target".into());
        }
        for t in &self.templates {
            let slots = t.key_slots()?;
            if slots != self.key_columns.len() {
                return Err(DatagenError::SlotMismatch {
                    template: t.pattern.clone(),
                    slots,
                    keys: self.key_columns.len(),
                });
            }
        }
        match self.task {
            Task::SimpleKey => {
                let key = &self.key_columns[0];
                if self.n_values_per_column < self.rows_per_table {
                    return Err(DatagenError::DomainTooSmall {
                        column: key.clone(),
                        needed: self.rows_per_table,
                        available: self.n_values_per_column,
                    });
                }
            }
            Task::CompositeKey => {
                if self.rows_per_table < 3 {
                    return Err(DatagenError::CompositeTooSmall(self.rows_per_table));
                }
                let n = self.n_values_per_column;
                if n < 2 {
                    return Err(DatagenError::DomainTooSmall {
                        column: self.key_columns[0].clone(),
                        needed: 2,
                        available: n,
                    });
                }
                if n * n < self.rows_per_table {
                    return invalid(format!(
                        "{} rows cannot have unique key pairs over {n}x{n} values",
                        self.rows_per_table
                    ));
                }
            }
        }
        Ok(())
    }
}

fn column_order(spec: &GenerationSpec) -> Vec<&str> {
    spec.columns.iter().map(|c| c.name.as_str()).collect()
}

/// Fills the non-key cells of `rows` uniformly at random. `rows` holds the
/// key values per row, keyed by column name.
fn fill_rows(
    spec: &GenerationSpec,
    keyed: &[Vec<(&str, String)>],
    rng: &mut SeededRng,
) -> Table {
    let columns = column_order(spec);
    let rows: Vec<Vec<String>> = keyed
        .iter()
        .map(|keys| {
            columns
                .iter()
                .map(|c| match keys.iter().find(|(k, _)| k == c) {
                    Some((_, v)) => v.clone(),
                    None => rng
                        .choose(spec.domain(c).expect("validated column"))
                        .expect("validated non-empty domain")
                        .clone(),
                })
                .collect()
        })
        .collect();
    let columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    Table::new(columns, rows).expect("generated tables are well-formed")
}

/// A simple-key table: distinct key values per row, other cells uniform.
pub fn generate_table_simple(spec: &GenerationSpec, rng: &mut SeededRng) -> Result<Table, DatagenError> {
    if spec.task != Task::SimpleKey {
        return Err(DatagenError::InvalidSpec("expected a simple_key spec".into()));
    }
    spec.validate()?;
    let key = spec.key_columns[0].as_str();
    let domain = spec.domain(key).expect("validated key column");
    let keyed: Vec<Vec<(&str, String)>> = rng
        .sample_indices(domain.len(), spec.rows_per_table)
        .into_iter()
        .map(|i| vec![(key, domain[i].clone())])
        .collect();
    Ok(fill_rows(spec, &keyed, rng))
}

/// A composite-key table and the index of its target row. The target row's
/// first key is shared with one row and its second key with another; the
/// remaining rows draw unique key pairs at random. Rows are shuffled.
pub fn generate_table_composite(
    spec: &GenerationSpec,
    rng: &mut SeededRng,
) -> Result<(Table, usize), DatagenError> {
    if spec.task != Task::CompositeKey {
        return Err(DatagenError::InvalidSpec("expected a composite_key spec".into()));
    }
    if spec.rows_per_table < 3 {
        return Err(DatagenError::CompositeTooSmall(spec.rows_per_table));
    }
    spec.validate()?;
    let (k1, k2) = (spec.key_columns[0].as_str(), spec.key_columns[1].as_str());
    let d1 = spec.domain(k1).expect("validated key column");
    let d2 = spec.domain(k2).expect("validated key column");
    let a = rng.sample_indices(d1.len(), 2);
    let b = rng.sample_indices(d2.len(), 2);
    let mut pairs = vec![(a[0], b[0]), (a[0], b[1]), (a[1], b[0])];
    while pairs.len() < spec.rows_per_table {
        let p = (rng.below(d1.len()), rng.below(d2.len()));
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);
    let target = order.iter().position(|&i| i == 0).expect("target row present");
    let keyed: Vec<Vec<(&str, String)>> = order
        .iter()
        .map(|&i| {
            let (x, y) = pairs[i];
            vec![(k1, d1[x].clone()), (k2, d2[y].clone())]
        })
        .collect();
    Ok((fill_rows(spec, &keyed, rng), target))
}

/// Generates `spec.n_examples` examples. For each: a fresh table, a target
/// row (uniform for simple key, the overlapping row for composite key), a
/// target column drawn uniformly from [`GenerationSpec::target_columns`] and
/// a template drawn uniformly.
pub fn generate_dataset(spec: &GenerationSpec) -> Result<Vec<Example>, DatagenError> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let targets = spec.target_columns();
    let mut out = Vec::with_capacity(spec.n_examples);
    for _ in 0..spec.n_examples {
        let (table, row) = match spec.task {
            Task::SimpleKey => {
                let t = generate_table_simple(spec, &mut rng)?;
                let row = rng.below(t.n_rows());
                (t, row)
            }
            Task::CompositeKey => generate_table_composite(spec, &mut rng)?,
        };
        let column = *rng.choose(&targets).expect("validated targets");
        let template = rng.choose(&spec.templates).expect("validated templates");
        let keys: Vec<&str> = spec
            .key_columns
            .iter()
            .map(|k| table.cell(row, k).expect("key column present"))
            .collect();
        let question = template.render(column, &keys)?;
        let answer = table.cell(row, column).expect("target column present").to_string();
        out.push(Example::new(table.to_triples(), question, answer));
    }
    Ok(out)
}
