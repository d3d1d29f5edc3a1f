use std::collections::BTreeSet;
use std::time::Instant;

use super::{checked_id, render_checked, LinkResult, Linker, SpanSource};
use crate::error::{Error, Result};
use crate::kb::PrefixTrie;
use crate::markup::{
    prompt_ids, Annotation, Document, TokenId, Tokenizer, Vocab, ENTITY_CLOSE, ENTITY_OPEN, MENTION_CLOSE, MENTION_OPEN,
};
use crate::scorer::{argmax_among, TokenScorer};
use crate::spans::{decision_spans, DecisionSpan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedConfig {
    /// Added to the log-probability of the mention-open token at every
    /// pending position before comparing it with the next document token.
    pub mention_start_offset: f64,
    /// Entities retrieved per chunk.
    pub k: usize,
}

impl Default for GuidedConfig {
    fn default() -> Self {
        Self {
            mention_start_offset: 0.0,
            k: 100,
        }
    }
}

/// Trie over the mentions anchored at `pos` in `span`: the document tokens
/// of each anchored occurrence followed by the mention-close token. The
/// payload is the occurrence's end position.
pub fn dynamic_mention_trie(doc: &Document, span: &DecisionSpan, pos: usize, vocab: &Vocab) -> Result<PrefixTrie> {
    let ends: BTreeSet<usize> = span.anchored_at(pos).map(|m| m.end).collect();
    if ends.is_empty() {
        return Err(Error::EmptyChoice("no mention anchored at this position"));
    }
    let mut trie = PrefixTrie::new();
    for e in ends {
        let mut seq: Vec<TokenId> = (pos..e).map(|j| vocab.id_or_unknown(doc.surface(j))).collect();
        seq.push(MENTION_CLOSE);
        trie.insert(&seq, e as u32);
    }
    Ok(trie)
}

/// Trie over the titles associated with the emitted mention `[start, end)`
/// inside `span`, each followed by the entity-close token. The payload
/// indexes the returned title list.
pub fn dynamic_entity_trie(
    span: &DecisionSpan,
    start: usize,
    end: usize,
    vocab: &Vocab,
    tokenizer: &dyn Tokenizer,
) -> Result<(PrefixTrie, Vec<String>)> {
    let titles: Vec<String> = span
        .mentions
        .iter()
        .filter(|m| m.start == start && m.end == end)
        .map(|m| m.mention.entity.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if titles.is_empty() {
        return Err(Error::EmptyChoice("no entity associated with the emitted mention"));
    }
    let mut trie = PrefixTrie::new();
    for (i, t) in titles.iter().enumerate() {
        let mut seq = vocab.encode_ids(t, tokenizer)?;
        seq.push(ENTITY_CLOSE);
        trie.insert(&seq, i as u32);
    }
    Ok((trie, titles))
}

struct Decoder<'a> {
    scorer: &'a dyn TokenScorer,
    prefix: Vec<TokenId>,
    prompt_len: usize,
    calls: u64,
}

impl Decoder<'_> {
    fn logprobs(&mut self) -> Vec<f64> {
        self.calls += 1;
        self.scorer.next_logprobs(&self.prefix)
    }

    fn push(&mut self, id: TokenId) -> Result<()> {
        self.prefix.push(checked_id(id, self.scorer)?);
        Ok(())
    }

    /// Follows the trie to a leaf, calling the scorer only where more than
    /// one continuation is possible. Returns the leaf payload.
    fn walk(&mut self, trie: &PrefixTrie) -> Result<u32> {
        let mut node = PrefixTrie::ROOT;
        loop {
            if trie.num_children(node) == 0 {
                return trie
                    .value(node)
                    .ok_or_else(|| Error::InternalState("trie path ended without a value".into()));
            }
            let next: Vec<TokenId> = trie.children(node).map(|(t, _)| t).collect();
            for &t in &next {
                checked_id(t, self.scorer)?;
            }
            let tok = if next.len() == 1 {
                next[0]
            } else {
                let lp = self.logprobs();
                argmax_among(&lp, next.iter().copied()).expect("non-empty candidates")
            };
            self.push(tok)?;
            node = trie.child(node, tok).expect("chosen among children");
        }
    }
}

/// Greedy decoding guided by decision spans.
///
/// Outside spans the document is copied without consulting the scorer. At
/// a span position where some possible mention is anchored, one call
/// decides between copying the document token and opening a mention
/// (`log P(open) + offset` against `log P(token)`, ties to the lower id).
/// Span positions with no anchored mention are copied for free, as opening
/// there has no legal continuation. Mention and entity tokens follow
/// dynamic tries with calls only at branching nodes.
pub fn guided_link(
    doc: &Document,
    spans: &[DecisionSpan],
    scorer: &dyn TokenScorer,
    vocab: &Vocab,
    tokenizer: &dyn Tokenizer,
    config: &GuidedConfig,
) -> Result<LinkResult> {
    let started = Instant::now();
    let prompt = prompt_ids(doc, vocab);
    let mut dec = Decoder {
        scorer,
        prompt_len: prompt.len(),
        prefix: prompt,
        calls: 0,
    };
    for w in spans.windows(2) {
        if w[0].end > w[1].start {
            return Err(Error::InternalState("decision spans overlap or are unsorted".into()));
        }
    }
    let mut anns = Vec::new();
    let mut spans = spans.iter().peekable();
    let mut i = 0;
    while i < doc.len() {
        while spans.peek().is_some_and(|s| s.end <= i) {
            spans.next();
        }
        let doc_id = vocab.id_or_unknown(doc.surface(i));
        let span = match spans.peek() {
            Some(s) if s.start <= i => *s,
            _ => {
                dec.push(doc_id)?;
                i += 1;
                continue;
            }
        };
        if span.anchored_at(i).next().is_none() {
            dec.push(doc_id)?;
            i += 1;
            continue;
        }
        let lp = dec.logprobs();
        let copy = lp[checked_id(doc_id, scorer)? as usize];
        let open = lp[MENTION_OPEN as usize] + config.mention_start_offset;
        // ties go to the lower id, and the open token has the lowest id
        let opens = open > copy || (open == copy && MENTION_OPEN < doc_id);
        if !opens {
            dec.push(doc_id)?;
            i += 1;
            continue;
        }
        dec.push(MENTION_OPEN)?;
        let end = dec.walk(&dynamic_mention_trie(doc, span, i, vocab)?)? as usize;
        dec.push(ENTITY_OPEN)?;
        let (trie, titles) = dynamic_entity_trie(span, i, end, vocab, tokenizer)?;
        let which = dec.walk(&trie)? as usize;
        anns.push(Annotation::new(i, end, titles[which].clone()));
        i = end;
    }
    let generated = render_checked(doc, &anns, tokenizer)?;
    Ok(LinkResult {
        annotations: anns,
        lm_forwards: dec.calls,
        wall_time: started.elapsed(),
        generated,
        target: dec.prefix[dec.prompt_len..].to_vec(),
        score: None,
    })
}

/// Retrieval, span construction and guided decoding behind one call.
pub struct GuidedLinker<'a> {
    pub scorer: &'a dyn TokenScorer,
    pub vocab: &'a Vocab,
    pub tokenizer: &'a dyn Tokenizer,
    pub spans: SpanSource<'a>,
    pub config: GuidedConfig,
}

impl GuidedLinker<'_> {
    pub fn spans_for(&self, doc: &Document) -> Result<Vec<DecisionSpan>> {
        let retrieved = self.spans.retriever.retrieve(doc, self.config.k)?;
        Ok(decision_spans(doc, retrieved.iter().map(String::as_str), self.spans.map))
    }
}

impl Linker for GuidedLinker<'_> {
    fn name(&self) -> &str {
        "guided"
    }

    fn link(&self, doc: &Document) -> Result<LinkResult> {
        let started = Instant::now();
        let spans = self.spans_for(doc)?;
        let mut r = guided_link(doc, &spans, self.scorer, self.vocab, self.tokenizer, &self.config)?;
        r.wall_time = started.elapsed();
        Ok(r)
    }
}
