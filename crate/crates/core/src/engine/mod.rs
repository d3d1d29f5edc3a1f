//! Constrained decoders that turn a document into an annotated sequence.
//!
//! [`guided_link`] consults the scorer only inside decision spans and
//! constrains it with small per-position tries. [`vanilla_link`] is the
//! baseline beam search that decides copy-or-open at every token and
//! constrains entities with a trie over the whole knowledge base.

mod guided;
mod vanilla;

use std::time::Duration;

use serde::Serialize;

pub use guided::{dynamic_entity_trie, dynamic_mention_trie, guided_link, GuidedConfig, GuidedLinker};
pub use vanilla::{vanilla_link, VanillaConfig, VanillaLinker};

use crate::error::{Error, Result};
use crate::kb::EntityToMentionMap;
use crate::markup::{parse_annotated_with, render_annotated, Annotation, Document, TokenId, Tokenizer};
use crate::retriever::{retrieve_for_document, DualEncoder, EntityIndex};
use crate::scorer::TokenScorer;

/// Outcome of decoding one document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkResult {
    pub annotations: Vec<Annotation>,
    /// Scorer calls made by this decode.
    pub lm_forwards: u64,
    #[serde(skip)]
    pub wall_time: Duration,
    /// The annotated sequence in markup form.
    pub generated: String,
    /// Generated token ids after the prompt.
    #[serde(skip)]
    pub target: Vec<TokenId>,
    /// Length-normalized beam score (vanilla decoding only).
    #[serde(skip)]
    pub score: Option<f64>,
}

/// Any document linker with per-call forward accounting.
pub trait Linker: Send + Sync {
    fn name(&self) -> &str;
    fn link(&self, doc: &Document) -> Result<LinkResult>;
}

/// Source of candidate entity titles for a document.
pub trait EntityRetriever: Send + Sync {
    fn retrieve(&self, doc: &Document, k: usize) -> Result<Vec<String>>;
}

/// Dual-encoder retrieval: union of per-chunk top-k.
pub struct DenseRetriever<'a> {
    pub encoder: &'a DualEncoder,
    pub index: &'a EntityIndex,
    pub chunk_len: usize,
}

impl EntityRetriever for DenseRetriever<'_> {
    fn retrieve(&self, doc: &Document, k: usize) -> Result<Vec<String>> {
        let ids = retrieve_for_document(self.encoder, self.index, doc, k, self.chunk_len)?;
        Ok(ids.into_iter().map(|i| self.index.titles()[i].clone()).collect())
    }
}

/// Returns a fixed list regardless of the document or `k`.
pub struct FixedRetriever(pub Vec<String>);

impl EntityRetriever for FixedRetriever {
    fn retrieve(&self, _doc: &Document, _k: usize) -> Result<Vec<String>> {
        Ok(self.0.clone())
    }
}

/// Renders the annotations and checks that the markup parses back to the
/// same document and annotations.
pub(crate) fn render_checked(doc: &Document, anns: &[Annotation], tokenizer: &dyn Tokenizer) -> Result<String> {
    let generated = render_annotated(doc, anns).map_err(|e| Error::InternalState(format!("render failed: {e}")))?;
    match parse_annotated_with(&generated, tokenizer) {
        Ok(p) if p.text == doc.text && p.annotations == anns => Ok(generated),
        Ok(_) => Err(Error::InternalState("generated markup does not round-trip".into())),
        Err(e) => Err(Error::InternalState(format!("generated markup does not parse: {e}"))),
    }
}

pub(crate) fn checked_id(id: TokenId, scorer: &dyn TokenScorer) -> Result<TokenId> {
    if (id as usize) < scorer.vocab_size() {
        Ok(id)
    } else {
        Err(Error::Vocabulary(format!(
            "token id {id} outside scorer vocabulary of size {}",
            scorer.vocab_size()
        )))
    }
}

/// Entity-to-mention map and retriever bundled for span construction.
pub struct SpanSource<'a> {
    pub map: &'a EntityToMentionMap,
    pub retriever: &'a dyn EntityRetriever,
}
