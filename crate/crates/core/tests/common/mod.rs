//! Generators and brute-force oracles shared by the integration tests.
//!
//! The oracles here are written from the definitions and deliberately avoid
//! the library's decoders, tries and span merging.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use guidedel::kb::{EntityRecord, EntityToMentionMap, KnowledgeBase, MentionDict, Stopwords};
use guidedel::markup::{
    tokenize, Annotation, Document, RuleTokenizer, TokenId, Vocab, ENTITY_CLOSE, ENTITY_OPEN, MENTION_CLOSE, MENTION_OPEN,
    SEPARATOR, UNKNOWN,
};
use guidedel::scorer::{log_sum_exp, TokenScorer};
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: &[&str] = &[
    "Apple", "Steve", "Jobs", "apple", "Paris", "the", "of", "CEO", "Inc.", "river", "bank", "York", "New", "a",
];

pub const PUNCT: &[&str] = &[",", ".", "(", ")", "[", "]", "'s", "\\"];

/// Random text of `min..=max` words, occasionally followed by punctuation.
pub fn random_text<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(WORDS.choose(rng).unwrap());
        if rng.gen_bool(0.15) {
            out.push_str(PUNCT.choose(rng).unwrap());
        }
    }
    out
}

/// Up to `max` distinct titles of one or two words.
pub fn random_kb<R: Rng>(rng: &mut R, max: usize) -> KnowledgeBase {
    let n = rng.gen_range(1..=max);
    let mut titles = BTreeSet::new();
    while titles.len() < n {
        let t = if rng.gen_bool(0.6) {
            WORDS.choose(rng).unwrap().to_string()
        } else {
            format!("{} {}", WORDS.choose(rng).unwrap(), WORDS.choose(rng).unwrap())
        };
        titles.insert(t);
    }
    KnowledgeBase::build(titles.into_iter().map(|t| EntityRecord::new(t, ""))).unwrap()
}

/// Mention dictionary giving every entity one to three random mentions.
pub fn random_dict<R: Rng>(rng: &mut R, kb: &KnowledgeBase) -> MentionDict {
    let mut d = MentionDict::new(rng.gen_bool(0.5));
    for e in kb.iter() {
        d.add(&e.title, &e.title, 1);
        for _ in 0..rng.gen_range(0..=2) {
            let m = if rng.gen_bool(0.7) {
                WORDS.choose(rng).unwrap().to_string()
            } else {
                format!("{} {}", WORDS.choose(rng).unwrap(), WORDS.choose(rng).unwrap())
            };
            d.add(&m, &e.title, rng.gen_range(1..4));
        }
    }
    d
}

pub fn random_map<R: Rng>(rng: &mut R, kb: &KnowledgeBase) -> (MentionDict, EntityToMentionMap) {
    let dict = random_dict(rng, kb);
    let map = EntityToMentionMap::invert(&dict, &Stopwords::empty());
    (dict, map)
}

/// Vocabulary over the document and each title on its own.
pub fn vocab_for(doc: &Document, kb: &KnowledgeBase) -> Vocab {
    let mut v = Vocab::new();
    v.extend_from_text(&doc.text, &RuleTokenizer);
    for t in kb.titles() {
        v.extend_from_text(t, &RuleTokenizer);
    }
    v
}

/// A complete target sequence with the annotations it encodes.
#[derive(Debug, Clone)]
pub struct LegalSequence {
    pub tokens: Vec<TokenId>,
    pub annotations: Vec<Annotation>,
}

/// Every target sequence the unrestricted baseline may generate: any set of
/// non-overlapping spans over content tokens, each linked to any entity.
pub fn enumerate_legal_sequences(doc: &Document, kb: &KnowledgeBase, vocab: &Vocab) -> Vec<LegalSequence> {
    let doc_ids: Vec<TokenId> = doc.surfaces().map(|s| vocab.id(s).unwrap_or(UNKNOWN)).collect();
    let content: Vec<bool> = doc.surfaces().map(|s| !s.trim().is_empty()).collect();
    let titles: Vec<(String, Vec<TokenId>)> = kb
        .iter()
        .map(|e| {
            let ids = tokenize(&e.title)
                .iter()
                .map(|s| vocab.id(s).expect("title tokens are in the vocabulary"))
                .collect();
            (e.title.clone(), ids)
        })
        .collect();
    let mut out = Vec::new();
    let mut stack = vec![(0usize, Vec::<TokenId>::new(), Vec::<Annotation>::new())];
    while let Some((pos, toks, anns)) = stack.pop() {
        if pos == doc_ids.len() {
            out.push(LegalSequence {
                tokens: toks,
                annotations: anns,
            });
            continue;
        }
        let mut copy = toks.clone();
        copy.push(doc_ids[pos]);
        stack.push((pos + 1, copy, anns.clone()));
        for end in pos + 1..=doc_ids.len() {
            if !content[end - 1] {
                break;
            }
            for (title, ids) in &titles {
                let mut t = toks.clone();
                t.push(MENTION_OPEN);
                t.extend_from_slice(&doc_ids[pos..end]);
                t.push(MENTION_CLOSE);
                t.push(ENTITY_OPEN);
                t.extend_from_slice(ids);
                t.push(ENTITY_CLOSE);
                let mut a = anns.clone();
                a.push(Annotation::new(pos, end, title.clone()));
                stack.push((end, t, a));
            }
        }
    }
    out
}

/// Prompt as defined for the linker: document ids then the separator.
pub fn prompt_for(doc: &Document, vocab: &Vocab) -> Vec<TokenId> {
    let mut p: Vec<TokenId> = doc.surfaces().map(|s| vocab.id(s).unwrap_or(UNKNOWN)).collect();
    p.push(SEPARATOR);
    p
}

/// Scores every legal sequence: each step's log-probability is
/// renormalized over the next tokens of all legal sequences sharing the
/// prefix. Returns `(total, total / len)` per sequence.
pub fn exhaustive_scores(scorer: &dyn TokenScorer, prompt: &[TokenId], seqs: &[LegalSequence]) -> Vec<(f64, f64)> {
    let mut next: HashMap<&[TokenId], BTreeSet<TokenId>> = HashMap::new();
    for s in seqs {
        for t in 0..s.tokens.len() {
            next.entry(&s.tokens[..t]).or_default().insert(s.tokens[t]);
        }
    }
    let mut cache: HashMap<Vec<TokenId>, Vec<f64>> = HashMap::new();
    seqs.iter()
        .map(|s| {
            let mut total = 0.0;
            for t in 0..s.tokens.len() {
                let mut full = prompt.to_vec();
                full.extend_from_slice(&s.tokens[..t]);
                let lp = cache.entry(full.clone()).or_insert_with(|| scorer.next_logprobs(&full));
                let z = log_sum_exp(next[&s.tokens[..t]].iter().map(|&a| lp[a as usize]));
                total += lp[s.tokens[t] as usize] - z;
            }
            let norm = if s.tokens.is_empty() { 0.0 } else { total / s.tokens.len() as f64 };
            (total, norm)
        })
        .collect()
}

/// Connected components of intervals under strict overlap, found by a
/// left-to-right sweep. Each component is `(start, end, member indices)`.
pub fn interval_union(intervals: &[(usize, usize)]) -> Vec<(usize, usize, Vec<usize>)> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&i| (intervals[i].0, intervals[i].1, i));
    let mut out: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for i in order {
        let (s, e) = intervals[i];
        match out.last_mut() {
            Some(last) if s < last.1 => {
                last.1 = last.1.max(e);
                last.2.push(i);
            }
            _ => out.push((s, e, vec![i])),
        }
    }
    out
}

/// Next tokens after `prefix` by definition: the element at position
/// `prefix.len()` of every set member that extends `prefix`.
pub fn definitional_next(set: &BTreeSet<Vec<TokenId>>, prefix: &[TokenId]) -> BTreeSet<TokenId> {
    set.iter()
        .filter(|s| s.len() > prefix.len() && s.starts_with(prefix))
        .map(|s| s[prefix.len()])
        .collect()
}

/// Count of each item in a sequence.
pub fn multiset<T: Ord + Clone>(items: impl IntoIterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for x in items {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}
