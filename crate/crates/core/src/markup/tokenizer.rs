use std::ops::Range;

/// Splits text into contiguous byte ranges that partition it exactly.
pub trait Tokenizer: Send + Sync {
    fn split(&self, text: &str) -> Vec<Range<usize>>;
}

/// Default rule-based tokenizer.
///
/// Runs of alphanumeric characters form one token, every other
/// non-whitespace character is a token of its own, and whitespace is
/// attached as a prefix to the token that follows it. Whitespace at the
/// very end of the text becomes a trailing whitespace-only token.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

impl Tokenizer for RuleTokenizer {
    fn split(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = 0;
        let mut in_word = false;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if in_word {
                    spans.push(start..i);
                    start = i;
                    in_word = false;
                }
            } else if c.is_alphanumeric() {
                in_word = true;
            } else {
                if in_word {
                    spans.push(start..i);
                    start = i;
                    in_word = false;
                }
                let next = i + c.len_utf8();
                spans.push(start..next);
                start = next;
            }
        }
        if start < text.len() {
            spans.push(start..text.len());
        }
        spans
    }
}

/// Tokenizes `text` with the default tokenizer, returning token surfaces.
pub fn tokenize(text: &str) -> Vec<&str> {
    RuleTokenizer
        .split(text)
        .into_iter()
        .map(|r| &text[r])
        .collect()
}

pub fn detokenize<S: AsRef<str>>(surfaces: &[S]) -> String {
    surfaces.iter().map(AsRef::as_ref).collect()
}
