use crate::kb::KnowledgeBase;
use crate::markup::{AnnotatedDocument, Document};

/// Default chunk length in tokens.
pub const DEFAULT_CHUNK_LEN: usize = 32;

/// A window of at most `L` consecutive document tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocChunk {
    pub doc_id: String,
    pub token_start: usize,
    pub token_end: usize,
    /// Byte offsets into the document text.
    pub byte_start: usize,
    pub byte_end: usize,
    pub tokens: Vec<String>,
}

/// Tiles the document with windows of `len` tokens; the last window may be
/// shorter. An empty document yields no chunks.
pub fn chunk_document(doc: &Document, len: usize) -> Vec<DocChunk> {
    assert!(len > 0, "chunk length must be positive");
    (0..doc.len())
        .step_by(len)
        .map(|start| {
            let end = (start + len).min(doc.len());
            DocChunk {
                doc_id: doc.doc_id.clone(),
                token_start: start,
                token_end: end,
                byte_start: doc.token_range(start).start,
                byte_end: doc.token_range(end - 1).end,
                tokens: (start..end).map(|i| doc.surface(i).to_string()).collect(),
            }
        })
        .collect()
}

/// A chunk with the knowledge-base indices of the entities mentioned in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkExample {
    pub chunk: DocChunk,
    pub gold: Vec<usize>,
}

/// Chunks a corpus and assigns each annotation to the chunk containing its
/// first token. Entities missing from the knowledge base are ignored, and
/// chunks without any gold entity are dropped.
pub fn chunk_examples(corpus: &[AnnotatedDocument], kb: &KnowledgeBase, len: usize) -> Vec<ChunkExample> {
    let mut out = Vec::new();
    for ad in corpus {
        for chunk in chunk_document(&ad.doc, len) {
            let mut gold: Vec<usize> = ad
                .annotations
                .iter()
                .filter(|a| a.start >= chunk.token_start && a.start < chunk.token_end)
                .filter_map(|a| kb.index_of(&a.entity))
                .collect();
            gold.sort_unstable();
            gold.dedup();
            if !gold.is_empty() {
                out.push(ChunkExample { chunk, gold });
            }
        }
    }
    out
}
