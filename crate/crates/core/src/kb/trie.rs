use std::collections::BTreeMap;

use super::base::KnowledgeBase;
use crate::error::Result;
use crate::markup::{TokenId, Tokenizer, Vocab, ENTITY_CLOSE};

pub type NodeId = usize;

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<TokenId, NodeId>,
    value: Option<u32>,
}

/// Token-sequence acceptor. Each accepted sequence carries a `u32` payload
/// at its terminal node.
#[derive(Debug, Clone)]
pub struct PrefixTrie {
    nodes: Vec<Node>,
    sequences: usize,
}

impl Default for PrefixTrie {
    fn default() -> Self {
        Self::new()
    }
}

impl PrefixTrie {
    pub const ROOT: NodeId = 0;

    pub fn new() -> Self {
        Self {
            nodes: vec![Node::default()],
            sequences: 0,
        }
    }

    /// Inserts `seq`; returns false if it was already present, in which case
    /// the payload is left unchanged.
    pub fn insert(&mut self, seq: &[TokenId], value: u32) -> bool {
        let mut node = Self::ROOT;
        for &t in seq {
            node = match self.nodes[node].children.get(&t) {
                Some(&child) => child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[node].children.insert(t, child);
                    child
                }
            };
        }
        if self.nodes[node].value.is_some() {
            return false;
        }
        self.nodes[node].value = Some(value);
        self.sequences += 1;
        true
    }

    pub fn len(&self) -> usize {
        self.sequences
    }

    pub fn is_empty(&self) -> bool {
        self.sequences == 0
    }

    pub fn walk(&self, prefix: &[TokenId]) -> Option<NodeId> {
        prefix
            .iter()
            .try_fold(Self::ROOT, |node, t| self.nodes[node].children.get(t).copied())
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        self.nodes[node].children.get(&token).copied()
    }

    /// Continuations of `node` in ascending token order.
    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (TokenId, NodeId)> + '_ {
        self.nodes[node].children.iter().map(|(&t, &n)| (t, n))
    }

    pub fn num_children(&self, node: NodeId) -> usize {
        self.nodes[node].children.len()
    }

    pub fn value(&self, node: NodeId) -> Option<u32> {
        self.nodes[node].value
    }

    pub fn accepts(&self, seq: &[TokenId]) -> bool {
        self.walk(seq).is_some_and(|n| self.nodes[n].value.is_some())
    }

    pub fn allowed_next(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        match self.walk(prefix) {
            Some(n) => self.nodes[n].children.keys().copied().collect(),
            None => Vec::new(),
        }
    }

    /// All accepted sequences with their payloads, in lexicographic order.
    pub fn sequences(&self) -> Vec<(Vec<TokenId>, u32)> {
        let mut out = Vec::with_capacity(self.sequences);
        let mut path = Vec::new();
        self.collect(Self::ROOT, &mut path, &mut out);
        out
    }

    fn collect(&self, node: NodeId, path: &mut Vec<TokenId>, out: &mut Vec<(Vec<TokenId>, u32)>) {
        if let Some(v) = self.nodes[node].value {
            out.push((path.clone(), v));
        }
        for (&t, &child) in &self.nodes[node].children {
            path.push(t);
            self.collect(child, path, out);
            path.pop();
        }
    }
}

/// Trie over every entity title, each followed by the entity-close token.
/// The payload of each sequence is the entity's knowledge-base index.
pub fn build_entity_trie(kb: &KnowledgeBase, vocab: &Vocab, tokenizer: &dyn Tokenizer) -> Result<PrefixTrie> {
    let mut trie = PrefixTrie::new();
    for (i, e) in kb.iter().enumerate() {
        let mut ids = vocab.encode_ids(&e.title, tokenizer)?;
        ids.push(ENTITY_CLOSE);
        trie.insert(&ids, i as u32);
    }
    Ok(trie)
}
