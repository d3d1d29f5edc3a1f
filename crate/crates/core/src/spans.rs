//! Possible mentions, surface-form matching, and decision-span merging.

use std::collections::BTreeSet;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use crate::kb::EntityToMentionMap;
use crate::markup::Document;

/// An (entity, mention string) pair taken from the entity-to-mention map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PossibleMention {
    pub entity: String,
    pub mention: String,
}

impl PossibleMention {
    pub fn new(entity: impl Into<String>, mention: impl Into<String>) -> Self {
        Self {
            entity: entity.into(),
            mention: mention.into(),
        }
    }
}

/// Every mention listed for each retrieved entity. Entities absent from the
/// map contribute nothing. The result is sorted and free of duplicates.
pub fn candidate_mention_set<'a>(
    entities: impl IntoIterator<Item = &'a str>,
    map: &EntityToMentionMap,
) -> Vec<PossibleMention> {
    let mut out = BTreeSet::new();
    for e in entities {
        match map.mentions(e) {
            Some(ms) => out.extend(ms.iter().map(|m| PossibleMention::new(e, m.clone()))),
            None => log::warn!("retrieved entity {e:?} has no entry in the entity-to-mention map"),
        }
    }
    out.into_iter().collect()
}

/// One occurrence of a possible mention at token range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionMatch {
    pub start: usize,
    pub end: usize,
    pub mention: PossibleMention,
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Token-aligned, case-insensitive occurrences of every possible mention.
///
/// A match must begin where a token's non-whitespace content begins and
/// end at a token end. Overlapping matches are all reported, one per
/// (occurrence, possible mention). Output is sorted.
pub fn match_surface_forms(doc: &Document, mentions: &[PossibleMention]) -> Vec<MentionMatch> {
    let mut patterns: Vec<String> = Vec::new();
    let mut owners: Vec<Vec<usize>> = Vec::new();
    for (i, pm) in mentions.iter().enumerate() {
        let p = normalize(&pm.mention);
        if p.is_empty() {
            continue;
        }
        match patterns.iter().position(|q| *q == p) {
            Some(j) => owners[j].push(i),
            None => {
                patterns.push(p);
                owners.push(vec![i]);
            }
        }
    }
    if patterns.is_empty() || doc.is_empty() {
        return Vec::new();
    }

    // lower-cased text with per-token offsets in lower-cased coordinates
    let mut text = String::new();
    let mut starts = std::collections::HashMap::new();
    let mut ends = std::collections::HashMap::new();
    for i in 0..doc.len() {
        let surface = doc.surface(i);
        let content = surface.trim_start();
        text.push_str(&surface[..surface.len() - content.len()]);
        if !content.is_empty() {
            starts.insert(text.len(), i);
        }
        text.push_str(&content.to_lowercase());
        ends.insert(text.len(), i + 1);
    }

    let ac = AhoCorasick::new(&patterns).expect("patterns are plain strings");
    let mut out = Vec::new();
    for m in ac.find_overlapping_iter(&text) {
        if let (Some(&s), Some(&e)) = (starts.get(&m.start()), ends.get(&m.end())) {
            for &owner in &owners[m.pattern().as_usize()] {
                out.push(MentionMatch {
                    start: s,
                    end: e,
                    mention: mentions[owner].clone(),
                });
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// A document region `[start, end)` whose annotation must be decided by
/// the scorer, with the possible mentions anchored inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSpan {
    pub start: usize,
    pub end: usize,
    pub mentions: Vec<MentionMatch>,
}

impl DecisionSpan {
    /// Member occurrences starting exactly at token `pos`.
    pub fn anchored_at(&self, pos: usize) -> impl Iterator<Item = &MentionMatch> + '_ {
        self.mentions.iter().filter(move |m| m.start == pos)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Sorts matches by start (stable) and folds them left, extending the last
/// span while the next match starts strictly inside it. Touching intervals
/// (`end == next.start`) stay separate.
pub fn merge_decision_spans(mut raw: Vec<MentionMatch>) -> Vec<DecisionSpan> {
    raw.sort_by_key(|m| m.start);
    let mut merged: Vec<DecisionSpan> = Vec::new();
    for m in raw {
        match merged.last_mut() {
            Some(last) if m.start < last.end => {
                last.end = last.end.max(m.end);
                last.mentions.push(m);
            }
            _ => merged.push(DecisionSpan {
                start: m.start,
                end: m.end,
                mentions: vec![m],
            }),
        }
    }
    merged
}

/// Possible mentions of the retrieved entities, matched and merged.
pub fn decision_spans<'a>(
    doc: &Document,
    retrieved: impl IntoIterator<Item = &'a str>,
    map: &EntityToMentionMap,
) -> Vec<DecisionSpan> {
    let set = candidate_mention_set(retrieved, map);
    merge_decision_spans(match_surface_forms(doc, &set))
}

/// Fraction of document tokens inside some span.
pub fn span_coverage(spans: &[DecisionSpan], doc_len: usize) -> f64 {
    if doc_len == 0 {
        return 0.0;
    }
    spans.iter().map(DecisionSpan::len).sum::<usize>() as f64 / doc_len as f64
}
