//! Single-sequence task-oriented dialogue.
//!
//! One causal language model reads the dialogue context and writes, in a
//! single token stream, the belief state, then (after a database lookup) the
//! system actions and a delexicalized response.

pub mod corpus;
pub mod database;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod lexicon;
pub mod model;
pub mod ontology;
pub mod schema;
pub mod tokenizer;

pub use error::{Error, Result};
