//! Retrieval-guided generative entity linking.
//!
//! The pipeline retrieves candidate entities for a document with a dual
//! encoder, turns them into possible mentions through an entity-to-mention
//! map, marks the document regions where those mentions occur as decision
//! spans, and then decodes the annotated sequence with a token scorer that
//! is only consulted inside those spans. A vanilla constrained beam search
//! over a global entity trie is provided as the baseline.

pub mod engine;
pub mod error;
pub mod eval;
pub mod icl;
pub mod kb;
pub mod markup;
pub mod retriever;
pub mod scorer;
pub mod spans;
pub mod synthetic;

pub use error::{Error, Result};
