use std::cmp::Ordering;
use std::time::Instant;

use super::{checked_id, render_checked, LinkResult, Linker};
use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, MentionDict, NodeId, PrefixTrie};
use crate::markup::{
    prompt_ids, Annotation, Document, TokenId, Tokenizer, Vocab, ENTITY_CLOSE, ENTITY_OPEN, MENTION_CLOSE, MENTION_OPEN,
};
use crate::scorer::{log_sum_exp, TokenScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VanillaConfig {
    pub beam_size: usize,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        Self { beam_size: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Copy,
    Mention { start: usize },
    EntityOpen { start: usize, end: usize },
    Entity { start: usize, end: usize, node: NodeId },
}

#[derive(Debug, Clone)]
struct Hyp {
    target: Vec<TokenId>,
    score: f64,
    pos: usize,
    phase: Phase,
    anns: Vec<Annotation>,
}

impl Hyp {
    fn finished(&self, n: usize) -> bool {
        self.phase == Phase::Copy && self.pos == n
    }

    fn normalized(&self) -> f64 {
        if self.target.is_empty() {
            0.0
        } else {
            self.score / self.target.len() as f64
        }
    }
}

struct Constraints<'a> {
    doc_ids: Vec<TokenId>,
    /// Legal mention ends for a mention starting at each position.
    mention_ends: Vec<Vec<usize>>,
    trie: &'a PrefixTrie,
}

impl<'a> Constraints<'a> {
    fn new(doc: &Document, vocab: &Vocab, trie: &'a PrefixTrie, dict: Option<&MentionDict>) -> Self {
        let n = doc.len();
        let has_content = |i: usize| !doc.surface(i).trim().is_empty();
        let mut mention_ends = vec![Vec::new(); n];
        if !trie.is_empty() {
            for (s, ends) in mention_ends.iter_mut().enumerate() {
                for e in s + 1..=n {
                    if !has_content(e - 1) {
                        break;
                    }
                    if dict.is_none_or(|d| d.contains(doc.span_text(s, e).trim())) {
                        ends.push(e);
                    }
                }
            }
        }
        Self {
            doc_ids: doc.surfaces().map(|s| vocab.id_or_unknown(s)).collect(),
            mention_ends,
            trie,
        }
    }

    fn allowed(&self, h: &Hyp) -> Vec<TokenId> {
        let n = self.doc_ids.len();
        match h.phase {
            Phase::Copy if h.pos == n => Vec::new(),
            Phase::Copy => {
                let mut out = vec![self.doc_ids[h.pos]];
                if !self.mention_ends[h.pos].is_empty() {
                    out.push(MENTION_OPEN);
                }
                out
            }
            Phase::Mention { start } => {
                let ends = &self.mention_ends[start];
                let mut out = Vec::with_capacity(2);
                if h.pos > start && ends.contains(&h.pos) {
                    out.push(MENTION_CLOSE);
                }
                if h.pos < n && ends.last().is_some_and(|&e| e > h.pos) {
                    out.push(self.doc_ids[h.pos]);
                }
                out
            }
            Phase::EntityOpen { .. } => vec![ENTITY_OPEN],
            Phase::Entity { node, .. } => self.trie.children(node).map(|(t, _)| t).collect(),
        }
    }

    fn advance(&self, h: &Hyp, tok: TokenId, delta: f64, kb: &KnowledgeBase) -> Hyp {
        let mut next = h.clone();
        next.target.push(tok);
        next.score += delta;
        next.phase = match h.phase {
            Phase::Copy if tok == MENTION_OPEN => Phase::Mention { start: h.pos },
            Phase::Copy => {
                next.pos += 1;
                Phase::Copy
            }
            Phase::Mention { start } if tok == MENTION_CLOSE => Phase::EntityOpen { start, end: h.pos },
            Phase::Mention { start } => {
                next.pos += 1;
                Phase::Mention { start }
            }
            Phase::EntityOpen { start, end } => Phase::Entity {
                start,
                end,
                node: PrefixTrie::ROOT,
            },
            Phase::Entity { start, end, node } => {
                let child = self.trie.child(node, tok).expect("allowed token is a child");
                if tok == ENTITY_CLOSE {
                    let idx = self.trie.value(child).expect("entity-close ends a title") as usize;
                    next.anns.push(Annotation::new(start, end, kb.get(idx).title.clone()));
                    Phase::Copy
                } else {
                    Phase::Entity { start, end, node: child }
                }
            }
        };
        next
    }
}

fn by_rank(a: &Hyp, b: &Hyp, key: fn(&Hyp) -> f64) -> Ordering {
    key(b).total_cmp(&key(a)).then_with(|| a.target.cmp(&b.target))
}

/// Constrained beam search over the whole knowledge base.
///
/// Every live hypothesis calls the scorer at every step, including steps
/// with a single legal token. Log-probabilities are renormalized over the
/// legal tokens. Mentions cover one or more document tokens and, when a
/// dictionary is given, must be one of its keys. Entities follow the global
/// trie. Finished hypotheses are ranked by total log-probability divided by
/// the number of generated tokens. Ties resolve to the lexicographically
/// smaller token sequence.
#[allow(clippy::too_many_arguments)]
pub fn vanilla_link(
    doc: &Document,
    trie: &PrefixTrie,
    kb: &KnowledgeBase,
    dict: Option<&MentionDict>,
    scorer: &dyn TokenScorer,
    vocab: &Vocab,
    tokenizer: &dyn Tokenizer,
    config: &VanillaConfig,
) -> Result<LinkResult> {
    let started = Instant::now();
    if config.beam_size == 0 {
        return Err(Error::Config("beam_size must be at least 1".into()));
    }
    let n = doc.len();
    let cons = Constraints::new(doc, vocab, trie, dict);
    for &id in &cons.doc_ids {
        checked_id(id, scorer)?;
    }
    let prompt = prompt_ids(doc, vocab);
    let mut calls = 0u64;
    let init = Hyp {
        target: Vec::new(),
        score: 0.0,
        pos: 0,
        phase: Phase::Copy,
        anns: Vec::new(),
    };
    let mut finished: Vec<Hyp> = Vec::new();
    let mut live = Vec::new();
    if init.finished(n) {
        finished.push(init);
    } else {
        live.push(init);
    }
    let mut prefix = prompt.clone();
    while !live.is_empty() && finished.len() < config.beam_size {
        let mut candidates = Vec::new();
        for h in &live {
            let allowed = cons.allowed(h);
            if allowed.is_empty() {
                return Err(Error::InternalState("live hypothesis has no legal continuation".into()));
            }
            for &t in &allowed {
                checked_id(t, scorer)?;
            }
            prefix.truncate(prompt.len());
            prefix.extend_from_slice(&h.target);
            let lp = scorer.next_logprobs(&prefix);
            calls += 1;
            let z = log_sum_exp(allowed.iter().map(|&t| lp[t as usize]));
            for &t in &allowed {
                candidates.push(cons.advance(h, t, lp[t as usize] - z, kb));
            }
        }
        candidates.sort_by(|a, b| by_rank(a, b, |h| h.score));
        live.clear();
        for (rank, c) in candidates.into_iter().enumerate() {
            if c.finished(n) {
                if rank < config.beam_size {
                    finished.push(c);
                }
            } else if live.len() < config.beam_size {
                live.push(c);
            }
        }
    }
    finished.sort_by(|a, b| by_rank(a, b, Hyp::normalized));
    let best = finished
        .into_iter()
        .next()
        .ok_or_else(|| Error::InternalState("beam search produced no finished hypothesis".into()))?;
    let generated = render_checked(doc, &best.anns, tokenizer)?;
    Ok(LinkResult {
        score: Some(best.normalized()),
        annotations: best.anns,
        lm_forwards: calls,
        wall_time: started.elapsed(),
        generated,
        target: best.target,
    })
}

/// Baseline linker: global entity trie, optional mention dictionary.
pub struct VanillaLinker<'a> {
    pub scorer: &'a dyn TokenScorer,
    pub vocab: &'a Vocab,
    pub tokenizer: &'a dyn Tokenizer,
    pub kb: &'a KnowledgeBase,
    pub trie: &'a PrefixTrie,
    pub dict: Option<&'a MentionDict>,
    pub config: VanillaConfig,
}

impl Linker for VanillaLinker<'_> {
    fn name(&self) -> &str {
        "vanilla"
    }

    fn link(&self, doc: &Document) -> Result<LinkResult> {
        vanilla_link(
            doc,
            self.trie,
            self.kb,
            self.dict,
            self.scorer,
            self.vocab,
            self.tokenizer,
            &self.config,
        )
    }
}
