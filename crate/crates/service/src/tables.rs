use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tableqa::datagen::{generate_table_composite, generate_table_simple, GenerationSpec, Task};
use tableqa::rng::SeededRng;
use tableqa::table::Table;
use thiserror::Error;

/// A bundled table, serialized as `{table_id, columns, rows}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    pub table_id: String,
    #[serde(flatten)]
    pub table: Table,
}

#[derive(Debug, Error)]
pub enum TablesError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("invalid tables file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate table_id `{0}`")]
    DuplicateId(String),
}

fn austria() -> Table {
    Table::new(
        vec!["city", "immigration", "emigration_total"],
        vec![vec!["klagenfurt", "110", "140"], vec!["salzburg", "170", "100"]],
    )
    .expect("well-formed")
}

/// `austria` (the two-city example), plus one generated table per task.
pub fn default_tables() -> Vec<SampleTable> {
    let simple = GenerationSpec::default_for(Task::SimpleKey);
    let composite = GenerationSpec::default_for(Task::CompositeKey);
    vec![
        SampleTable {
            table_id: "austria".into(),
            table: austria(),
        },
        SampleTable {
            table_id: "simple_sample".into(),
            table: generate_table_simple(&simple, &mut SeededRng::new(11)).expect("default spec is valid"),
        },
        SampleTable {
            table_id: "composite_sample".into(),
            table: generate_table_composite(&composite, &mut SeededRng::new(11))
                .expect("default spec is valid")
                .0,
        },
    ]
}

/// Reads a JSON array of sample tables.
pub fn load_tables(path: impl AsRef<Path>) -> Result<Vec<SampleTable>, TablesError> {
    let tables: Vec<SampleTable> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let mut seen = HashSet::new();
    for t in &tables {
        if !seen.insert(t.table_id.as_str()) {
            return Err(TablesError::DuplicateId(t.table_id.clone()));
        }
    }
    Ok(tables)
}
