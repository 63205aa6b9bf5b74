//! End-to-end cross-document coreference over frozen token embeddings.
//!
//! The pipeline: enumerate and score spans ([`spans`]), keep the top
//! `lambda * T` per document, score every candidate pair inside a document
//! cluster ([`pairs`]), and merge with average-linkage agglomerative
//! clustering ([`clustering`]). [`trainer`] fits the scorers, [`evaluation`]
//! implements MUC, B-cubed, CEAF-e and CoNLL F1.

pub mod clustering;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod neural;
pub mod pairs;
pub mod spans;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
