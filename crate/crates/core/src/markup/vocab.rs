use std::collections::HashMap;

use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};

pub type TokenId = u32;

/// Opens a mention. Rendered as `"( "`.
pub const MENTION_OPEN: TokenId = 0;
/// Closes a mention. Rendered as `" )"`.
pub const MENTION_CLOSE: TokenId = 1;
/// Opens an entity identifier. Rendered as `" [ "`.
pub const ENTITY_OPEN: TokenId = 2;
/// Closes an entity identifier. Rendered as `" ]"`.
pub const ENTITY_CLOSE: TokenId = 3;
/// Separates the prompt (the document) from the generation target.
pub const SEPARATOR: TokenId = 4;
/// Stands in for document tokens the vocabulary has never seen.
pub const UNKNOWN: TokenId = 5;

const SPECIALS: [&str; 6] = ["( ", " )", " [ ", " ]", "<sep>", "<unk>"];

/// A token: dense id plus its surface string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub id: TokenId,
    pub surface: String,
}

/// Dense token vocabulary. Ids `0..6` are reserved for the markup
/// delimiters, the separator and the unknown token; ordinary surfaces are
/// numbered in first-seen order after that.
///
/// Special tokens are never returned by [`Vocab::id`]: a document token whose
/// surface happens to equal `" )"` is an ordinary token distinct from
/// [`MENTION_CLOSE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        Self {
            surfaces: SPECIALS.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
        }
    }

    pub fn num_specials() -> usize {
        SPECIALS.len()
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn insert(&mut self, surface: &str) -> TokenId {
        if let Some(&id) = self.index.get(surface) {
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.surfaces.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        id
    }

    /// Adds every token of `text`.
    pub fn extend_from_text(&mut self, text: &str, tokenizer: &dyn Tokenizer) {
        for r in tokenizer.split(text) {
            self.insert(&text[r]);
        }
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn id_or_unknown(&self, surface: &str) -> TokenId {
        self.id(surface).unwrap_or(UNKNOWN)
    }

    pub fn require(&self, surface: &str) -> Result<TokenId> {
        self.id(surface).ok_or_else(|| Error::Vocabulary(surface.to_string()))
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.surfaces[id as usize]
    }

    pub fn encode(&self, text: &str, tokenizer: &dyn Tokenizer) -> Result<Vec<Token>> {
        tokenizer
            .split(text)
            .into_iter()
            .map(|r| {
                let surface = &text[r];
                Ok(Token {
                    id: self.require(surface)?,
                    surface: surface.to_string(),
                })
            })
            .collect()
    }

    pub fn encode_ids(&self, text: &str, tokenizer: &dyn Tokenizer) -> Result<Vec<TokenId>> {
        tokenizer
            .split(text)
            .into_iter()
            .map(|r| self.require(&text[r]))
            .collect()
    }

    /// Ordinary surfaces in id order (specials excluded).
    pub fn ordinary_surfaces(&self) -> &[String] {
        &self.surfaces[SPECIALS.len()..]
    }

    pub fn from_ordinary_surfaces<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for s in surfaces {
            let before = v.len();
            v.insert(s.as_ref());
            if v.len() == before {
                return Err(Error::Format(format!("duplicate vocabulary entry {:?}", s.as_ref())));
            }
        }
        Ok(v)
    }
}
