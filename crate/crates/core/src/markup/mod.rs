//! Tokenization, documents, annotations and the annotated-sequence grammar.

mod annotated;
mod document;
mod tokenizer;
mod vocab;

pub use annotated::{
    escape, linearize, parse_annotated, parse_annotated_with, prompt_ids, render_annotated, render_annotated_with,
    ParsedSequence, RenderOptions, ENTITY_CLOSE_STR, ENTITY_OPEN_STR, MENTION_CLOSE_STR, MENTION_OPEN_STR,
};
pub use document::{
    char_annotations, read_dataset, validate_annotations, write_dataset, AnnotatedDocument, Annotation,
    CharAnnotation, DatasetRecord, Document,
};
pub(crate) use document::{read_jsonl, write_jsonl};
pub use tokenizer::{detokenize, tokenize, RuleTokenizer, Tokenizer};
pub use vocab::{
    Token, TokenId, Vocab, ENTITY_CLOSE, ENTITY_OPEN, MENTION_CLOSE, MENTION_OPEN, SEPARATOR, UNKNOWN,
};
