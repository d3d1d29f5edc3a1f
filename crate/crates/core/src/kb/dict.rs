use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::base::KnowledgeBase;
use crate::error::{Error, Result};
use crate::markup::AnnotatedDocument;

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "for", "from", "had", "has", "have", "he", "her",
    "his", "i", "if", "in", "into", "is", "it", "its", "me", "my", "no", "not", "of", "on", "or", "our", "she",
    "so", "that", "the", "their", "them", "then", "there", "these", "they", "this", "to", "was", "we", "were",
    "what", "which", "who", "will", "with", "you", "your",
];

/// Lower-cased stopword set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Self(DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect())
    }
}

impl Stopwords {
    pub fn empty() -> Self {
        Self(HashSet::new())
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// One stopword per line.
    pub fn read(path: &Path) -> Result<Self> {
        Ok(Self::from_words(fs::read_to_string(path)?.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    /// True when every whitespace-separated word of `mention` is a stopword.
    pub fn covers(&self, mention: &str) -> bool {
        mention.split_whitespace().all(|w| self.contains(w))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity: String,
    pub count: u32,
}

/// Mention surface → candidate entities with link counts.
///
/// Candidates under one mention are distinct and ordered by descending
/// count, then title. Keys are lower-cased when `casefold` is set, and
/// lookups normalize the query the same way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionDict {
    pub casefold: bool,
    entries: BTreeMap<String, Vec<Candidate>>,
}

impl Default for MentionDict {
    fn default() -> Self {
        Self::new(true)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DictOptions {
    pub casefold: bool,
    /// Fail on annotations whose entity is not in the knowledge base
    /// instead of skipping them.
    pub strict: bool,
}

impl Default for DictOptions {
    fn default() -> Self {
        Self {
            casefold: true,
            strict: false,
        }
    }
}

impl MentionDict {
    pub fn new(casefold: bool) -> Self {
        Self {
            casefold,
            entries: BTreeMap::new(),
        }
    }

    pub fn normalize(&self, mention: &str) -> String {
        if self.casefold {
            mention.to_lowercase()
        } else {
            mention.to_string()
        }
    }

    /// Counts every linked mention surface in the corpus. No truncation of
    /// candidate lists is applied.
    pub fn build(corpus: &[AnnotatedDocument], kb: &KnowledgeBase, opts: DictOptions) -> Result<Self> {
        let mut dict = Self::new(opts.casefold);
        for ad in corpus {
            for a in &ad.annotations {
                if !kb.contains(&a.entity) {
                    if opts.strict {
                        return Err(Error::UnknownEntity(a.entity.clone()));
                    }
                    continue;
                }
                let surface = ad.doc.span_text(a.start, a.end);
                if surface.trim().is_empty() {
                    continue;
                }
                dict.add(surface, &a.entity, 1);
            }
        }
        Ok(dict)
    }

    pub fn add(&mut self, mention: &str, entity: &str, count: u32) {
        if count == 0 {
            return;
        }
        let key = self.normalize(mention);
        let list = self.entries.entry(key).or_default();
        match list.iter_mut().find(|c| c.entity == entity) {
            Some(c) => c.count += count,
            None => list.push(Candidate {
                entity: entity.to_string(),
                count,
            }),
        }
        list.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.entity.cmp(&b.entity)));
    }

    /// Adds each knowledge-base alias (and the title itself) with count 1.
    pub fn add_aliases(&mut self, kb: &KnowledgeBase) {
        for e in kb.iter() {
            for alias in std::iter::once(&e.title).chain(&e.aliases) {
                if !alias.trim().is_empty() && self.prior(alias, &e.title) == 0.0 {
                    self.add(alias, &e.title, 1);
                }
            }
        }
    }

    pub fn candidates(&self, mention: &str) -> &[Candidate] {
        self.entries
            .get(&self.normalize(mention))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn contains(&self, mention: &str) -> bool {
        self.entries.contains_key(&self.normalize(mention))
    }

    /// Empirical p(entity | mention); 0 for unseen pairs.
    pub fn prior(&self, mention: &str, entity: &str) -> f64 {
        let cands = self.candidates(mention);
        let total: u64 = cands.iter().map(|c| u64::from(c.count)).sum();
        match cands.iter().find(|c| c.entity == entity) {
            Some(c) if total > 0 => f64::from(c.count) / total as f64,
            _ => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Candidate])> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Entity title → mention strings, the inversion of a [`MentionDict`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityToMentionMap {
    entries: BTreeMap<String, Vec<String>>,
}

impl EntityToMentionMap {
    /// Reverses the dictionary, removes case-insensitive duplicates under
    /// each entity (keeping the first spelling in key order) and drops
    /// mentions made only of stopwords.
    pub fn invert(dict: &MentionDict, stopwords: &Stopwords) -> Self {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (mention, cands) in dict.iter() {
            if mention.trim().is_empty() || stopwords.covers(mention) {
                continue;
            }
            let folded = mention.to_lowercase();
            for c in cands {
                if seen.insert((c.entity.clone(), folded.clone())) {
                    entries.entry(c.entity.clone()).or_default().push(mention.to_string());
                }
            }
        }
        Self { entries }
    }

    pub fn mentions(&self, entity: &str) -> Option<&[String]> {
        self.entries.get(entity).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
