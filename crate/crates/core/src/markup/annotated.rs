//! The annotated-sequence grammar used as the generation target.
//!
//! A linked mention `m` with entity `e` is written as
//! `( m ) [ e ]`, i.e. `"( " + m + " )" + " [ " + e + " ]"`. Whitespace that
//! precedes the mention in the source text stays in front of the opening
//! parenthesis. Literal `(`, `)`, `[`, `]` and `\` in the text or in an
//! entity title are escaped with a backslash.

use std::collections::HashSet;

use super::document::{validate_annotations, Annotation, Document};
use super::tokenizer::{RuleTokenizer, Tokenizer};
use super::vocab::{TokenId, Vocab, ENTITY_CLOSE, ENTITY_OPEN, MENTION_CLOSE, MENTION_OPEN};
use crate::error::{Error, Result};

pub const MENTION_OPEN_STR: &str = "( ";
pub const MENTION_CLOSE_STR: &str = " )";
pub const ENTITY_OPEN_STR: &str = " [ ";
pub const ENTITY_CLOSE_STR: &str = " ]";

const ESCAPED: [char; 5] = ['(', ')', '[', ']', '\\'];

#[derive(Debug, Clone, Copy, Default)]
pub struct RenderOptions<'a> {
    /// Reject documents whose text contains a delimiter character instead
    /// of escaping it.
    pub reject_delimiters: bool,
    /// When set, every annotated entity must be one of these titles.
    pub known_titles: Option<&'a HashSet<String>>,
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if ESCAPED.contains(&c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn render_annotated(doc: &Document, anns: &[Annotation]) -> Result<String> {
    render_annotated_with(doc, anns, RenderOptions::default())
}

pub fn render_annotated_with(doc: &Document, anns: &[Annotation], opts: RenderOptions<'_>) -> Result<String> {
    validate_annotations(doc, anns)?;
    if opts.reject_delimiters {
        if let Some((offset, ch)) = doc.text.char_indices().find(|(_, c)| ESCAPED.contains(c)) {
            return Err(Error::DelimiterInText { ch, offset });
        }
    }
    let mut out = String::with_capacity(doc.text.len() + anns.len() * 24);
    let mut cursor = 0;
    for a in anns {
        if let Some(titles) = opts.known_titles {
            if !titles.contains(&a.entity) {
                return Err(Error::UnknownEntity(a.entity.clone()));
            }
        }
        let mention_start = doc.content_start(a.start);
        let mention_end = doc.token_range(a.end - 1).end;
        if mention_start == mention_end {
            return Err(Error::InvalidAnnotation {
                start: a.start,
                end: a.end,
                len: doc.len(),
                reason: "mention is whitespace only",
            });
        }
        out.push_str(&escape(&doc.text[cursor..mention_start]));
        out.push_str(MENTION_OPEN_STR);
        out.push_str(&escape(&doc.text[mention_start..mention_end]));
        out.push_str(MENTION_CLOSE_STR);
        out.push_str(ENTITY_OPEN_STR);
        out.push_str(&escape(&a.entity));
        out.push_str(ENTITY_CLOSE_STR);
        cursor = mention_end;
    }
    out.push_str(&escape(&doc.text[cursor..]));
    Ok(out)
}

/// Result of parsing an annotated sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSequence {
    pub text: String,
    pub annotations: Vec<Annotation>,
}

impl ParsedSequence {
    pub fn into_document(self, doc_id: impl Into<String>, tokenizer: &dyn Tokenizer) -> (Document, Vec<Annotation>) {
        (Document::new(doc_id, self.text, tokenizer), self.annotations)
    }
}

pub fn parse_annotated(seq: &str) -> Result<ParsedSequence> {
    parse_annotated_with(seq, &RuleTokenizer)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Text,
    Mention,
    Entity,
}

/// Parses an annotated sequence back into plain text and token-level
/// annotations. Errors carry the byte offset into `seq`.
pub fn parse_annotated_with(seq: &str, tokenizer: &dyn Tokenizer) -> Result<ParsedSequence> {
    let malformed = |offset: usize, reason: &'static str| Error::MalformedMarkup { offset, reason };
    let mut text = String::with_capacity(seq.len());
    // (byte start, byte end, entity, offset of the mention open in seq)
    let mut spans: Vec<(usize, usize, String, usize)> = Vec::new();
    let mut mode = Mode::Text;
    let mut mention_start = 0;
    let mut mention_offset = 0;
    let mut mention_end = 0;
    let mut entity = String::new();

    let bytes = seq.as_bytes();
    let mut chars = seq.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let escaped = c == '\\';
        let ch = if escaped {
            match chars.next() {
                Some((_, n)) => n,
                None => return Err(malformed(i, "dangling escape")),
            }
        } else {
            c
        };
        match (mode, escaped, ch) {
            (Mode::Text, false, '(') => {
                if bytes.get(i + 1) != Some(&b' ') {
                    return Err(malformed(i, "mention open must be followed by a space"));
                }
                chars.next();
                mode = Mode::Mention;
                mention_start = text.len();
                mention_offset = i;
            }
            (Mode::Text, false, ')') => return Err(malformed(i, "mention close without open")),
            (Mode::Text, false, '[') => return Err(malformed(i, "entity block without preceding mention")),
            (Mode::Text, false, ']') => return Err(malformed(i, "entity close without open")),
            (Mode::Mention, false, ')') => {
                if !text.ends_with(' ') || text.len() == mention_start {
                    return Err(malformed(i, "mention close must be preceded by a space"));
                }
                text.pop();
                if text.len() == mention_start {
                    return Err(malformed(i, "empty mention"));
                }
                if !seq[i + 1..].starts_with(ENTITY_OPEN_STR) {
                    return Err(malformed(i + 1, "mention must be followed by an entity block"));
                }
                for _ in 0..ENTITY_OPEN_STR.len() {
                    chars.next();
                }
                mention_end = text.len();
                mode = Mode::Entity;
                entity.clear();
            }
            (Mode::Mention, false, '(') => return Err(malformed(i, "nested mention")),
            (Mode::Mention, false, '[') => return Err(malformed(i, "entity block inside mention")),
            (Mode::Mention, false, ']') => return Err(malformed(i, "entity close inside mention")),
            (Mode::Entity, false, ']') => {
                if !entity.ends_with(' ') {
                    return Err(malformed(i, "entity close must be preceded by a space"));
                }
                entity.pop();
                if entity.is_empty() {
                    return Err(malformed(i, "empty entity identifier"));
                }
                spans.push((mention_start, mention_end, std::mem::take(&mut entity), mention_offset));
                mode = Mode::Text;
            }
            (Mode::Entity, false, '(' | ')' | '[') => return Err(malformed(i, "delimiter inside entity identifier")),
            (Mode::Entity, _, ch) => entity.push(ch),
            (_, _, ch) => text.push(ch),
        }
    }
    match mode {
        Mode::Text => {}
        Mode::Mention => return Err(malformed(seq.len(), "unterminated mention")),
        Mode::Entity => return Err(malformed(seq.len(), "unterminated entity identifier")),
    }

    let doc = Document::new("", text, tokenizer);
    let mut annotations = Vec::with_capacity(spans.len());
    for (bs, be, ent, offset) in spans {
        let cs = doc.text[..bs].chars().count();
        let ce = cs + doc.text[bs..be].chars().count();
        let (s, e) = doc
            .char_to_token_span(cs, ce)
            .map_err(|_| malformed(offset, "mention does not align with token boundaries"))?;
        if doc.content_start(s) != bs {
            return Err(malformed(offset, "mention does not align with token boundaries"));
        }
        annotations.push(Annotation::new(s, e, ent));
    }
    // Spans were collected left to right over disjoint text, so they are
    // already sorted and cannot overlap unless two mentions share a token.
    validate_annotations(&doc, &annotations).map_err(|_| malformed(0, "mentions share a token"))?;
    Ok(ParsedSequence {
        text: doc.text,
        annotations,
    })
}

/// Token-id form of an annotated document as seen by a scorer: document
/// tokens with `MENTION_OPEN`, mention tokens, `MENTION_CLOSE`,
/// `ENTITY_OPEN`, title tokens, `ENTITY_CLOSE` spliced in at each mention.
///
/// Mention tokens are the document tokens themselves, including any
/// leading whitespace of the first mention token.
pub fn linearize(doc: &Document, anns: &[Annotation], vocab: &Vocab, tokenizer: &dyn Tokenizer) -> Result<Vec<TokenId>> {
    validate_annotations(doc, anns)?;
    let mut out = Vec::with_capacity(doc.len() + anns.len() * 8);
    let mut next = anns.iter().peekable();
    let mut i = 0;
    while i < doc.len() {
        match next.peek() {
            Some(a) if a.start == i => {
                out.push(MENTION_OPEN);
                for j in a.start..a.end {
                    out.push(vocab.require(doc.surface(j))?);
                }
                out.push(MENTION_CLOSE);
                out.push(ENTITY_OPEN);
                out.extend(vocab.encode_ids(&a.entity, tokenizer)?);
                out.push(ENTITY_CLOSE);
                i = a.end;
                next.next();
            }
            _ => {
                out.push(vocab.require(doc.surface(i))?);
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Prompt for a document: its token ids followed by the separator.
/// Unseen document tokens map to [`super::UNKNOWN`].
pub fn prompt_ids(doc: &Document, vocab: &Vocab) -> Vec<TokenId> {
    let mut out: Vec<TokenId> = doc.surfaces().map(|s| vocab.id_or_unknown(s)).collect();
    out.push(super::vocab::SEPARATOR);
    out
}
