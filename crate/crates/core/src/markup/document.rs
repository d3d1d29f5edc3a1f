use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};

/// A document together with its tokenization.
///
/// Token boundaries are byte ranges into `text` that partition it exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    tokens: Vec<Range<usize>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>, tokenizer: &dyn Tokenizer) -> Self {
        let text = text.into();
        let tokens = tokenizer.split(&text);
        Self {
            doc_id: doc_id.into(),
            text,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_range(&self, i: usize) -> Range<usize> {
        self.tokens[i].clone()
    }

    pub fn surface(&self, i: usize) -> &str {
        &self.text[self.tokens[i].clone()]
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|r| &self.text[r.clone()])
    }

    /// Byte offset of the first non-whitespace character of token `i`, or
    /// the token end if the token is whitespace only.
    pub fn content_start(&self, i: usize) -> usize {
        let r = &self.tokens[i];
        let s = &self.text[r.clone()];
        r.start + (s.len() - s.trim_start().len())
    }

    /// Text covered by tokens `[start, end)` without the leading whitespace
    /// of the first token. This is the mention surface of a token span.
    pub fn span_text(&self, start: usize, end: usize) -> &str {
        &self.text[self.content_start(start)..self.tokens[end - 1].end]
    }

    /// Maps a character span onto a token span.
    ///
    /// Leading and trailing whitespace inside the span is trimmed first.
    /// The trimmed start must coincide with the start of a token or with the
    /// end of its leading whitespace; the trimmed end must coincide with a
    /// token end.
    pub fn char_to_token_span(&self, char_start: usize, char_end: usize) -> Result<(usize, usize)> {
        let misaligned = || Error::MisalignedSpan {
            start: char_start,
            end: char_end,
        };
        if char_start >= char_end {
            return Err(misaligned());
        }
        let bs = char_to_byte(&self.text, char_start).ok_or_else(misaligned)?;
        let be = char_to_byte(&self.text, char_end).ok_or_else(misaligned)?;
        let slice = &self.text[bs..be];
        let trimmed_start = bs + (slice.len() - slice.trim_start().len());
        let trimmed_end = bs + slice.trim_end().len();
        if trimmed_start >= trimmed_end {
            return Err(misaligned());
        }
        let first = self
            .tokens
            .partition_point(|r| r.end <= trimmed_start);
        if first >= self.tokens.len()
            || !(self.tokens[first].start == trimmed_start || self.content_start(first) == trimmed_start)
        {
            return Err(misaligned());
        }
        let last = self.tokens.partition_point(|r| r.end < trimmed_end);
        if last >= self.tokens.len() || self.tokens[last].end != trimmed_end {
            return Err(misaligned());
        }
        Ok((first, last + 1))
    }

    /// Character offsets `[start, end)` of the mention surface of a token span.
    pub fn token_span_to_chars(&self, start: usize, end: usize) -> (usize, usize) {
        let bs = self.content_start(start);
        let be = self.tokens[end - 1].end;
        let cs = self.text[..bs].chars().count();
        let ce = cs + self.text[bs..be].chars().count();
        (cs, ce)
    }
}

fn char_to_byte(text: &str, ch: usize) -> Option<usize> {
    if ch == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (i, _) in text.char_indices() {
        if count == ch {
            return Some(i);
        }
        count += 1;
    }
    (count == ch).then_some(text.len())
}

/// Entity annotation over token indices: `[start, end)` linked to `entity`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    pub entity: String,
}

impl Annotation {
    pub fn new(start: usize, end: usize, entity: impl Into<String>) -> Self {
        Self {
            start,
            end,
            entity: entity.into(),
        }
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }
}

/// Checks bounds, ordering and non-overlap of a document's annotations.
pub fn validate_annotations(doc: &Document, anns: &[Annotation]) -> Result<()> {
    for a in anns {
        if a.start >= a.end || a.end > doc.len() {
            return Err(Error::InvalidAnnotation {
                start: a.start,
                end: a.end,
                len: doc.len(),
                reason: "span out of range",
            });
        }
    }
    for pair in anns.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::Overlap {
                first_start: pair[0].start,
                first_end: pair[0].end,
                second_start: pair[1].start,
                second_end: pair[1].end,
            });
        }
    }
    Ok(())
}

/// A document with its (gold or predicted) annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedDocument {
    pub doc: Document,
    pub annotations: Vec<Annotation>,
}

/// One line of a dataset file. Offsets are character offsets, end exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub annotations: Vec<CharAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharAnnotation {
    pub start: usize,
    pub end: usize,
    pub entity: String,
}

impl AnnotatedDocument {
    pub fn from_record(record: DatasetRecord, tokenizer: &dyn Tokenizer) -> Result<Self> {
        let doc = Document::new(record.doc_id, record.text, tokenizer);
        let mut annotations = record
            .annotations
            .iter()
            .map(|a| {
                let (s, e) = doc.char_to_token_span(a.start, a.end)?;
                Ok(Annotation::new(s, e, a.entity.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        annotations.sort();
        validate_annotations(&doc, &annotations)?;
        Ok(Self { doc, annotations })
    }

    pub fn to_record(&self) -> DatasetRecord {
        DatasetRecord {
            doc_id: self.doc.doc_id.clone(),
            text: self.doc.text.clone(),
            annotations: char_annotations(&self.doc, &self.annotations),
        }
    }
}

pub fn char_annotations(doc: &Document, anns: &[Annotation]) -> Vec<CharAnnotation> {
    anns.iter()
        .map(|a| {
            let (start, end) = doc.token_span_to_chars(a.start, a.end);
            CharAnnotation {
                start,
                end,
                entity: a.entity.clone(),
            }
        })
        .collect()
}

pub fn read_dataset(path: &Path, tokenizer: &dyn Tokenizer) -> Result<Vec<AnnotatedDocument>> {
    read_jsonl::<DatasetRecord>(path)?
        .into_iter()
        .map(|r| AnnotatedDocument::from_record(r, tokenizer))
        .collect()
}

pub fn write_dataset(path: &Path, docs: &[AnnotatedDocument]) -> Result<()> {
    write_jsonl(path, docs.iter().map(AnnotatedDocument::to_record))
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
