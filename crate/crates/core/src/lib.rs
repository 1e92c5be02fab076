//! Question answering over small tables with an end-to-end memory network.
//!
//! A table becomes a bag of `(row_id, column, value)` triples, each stored
//! as one memory slot. A question is a bag of words. The network attends
//! over the slots for a fixed number of hops and emits a distribution over
//! the vocabulary.
//!
//! ```
//! use tableqa::table::{Table, Example};
//!
//! let table = Table::new(
//!     vec!["city", "immigration", "emigration_total"],
//!     vec![vec!["klagenfurt", "110", "140"], vec!["salzburg", "170", "100"]],
//! )?;
//! let example = Example::from_table(&table, "What is the immigration in Salzburg?", "170");
//! assert_eq!(example.triples.len(), 6);
//! assert_eq!(example.question, ["what", "is", "the", "immigration", "in", "salzburg"]);
//! # Ok::<(), tableqa::table::TableError>(())
//! ```
//!
//! Modules:
//!
//! - [`table`]: tables, triples, tokenization, vocabularies, JSONL datasets
//! - [`datagen`]: synthetic tables and template questions
//! - [`memnet`]: the model, its gradients, training and checkpoints
//! - [`disambig`]: mapping out-of-vocabulary question words through word vectors
//! - [`eval`]: perturbed test sets and scoring
//! - [`rng`]: the seeded generator everything random goes through

pub mod datagen;
pub mod disambig;
pub mod eval;
pub mod memnet;
pub mod rng;
pub mod table;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tables.md")]
    mod tables {}
    #[doc = include_str!("../../../book/src/datagen.md")]
    mod datagen {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/disambiguation.md")]
    mod disambiguation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
