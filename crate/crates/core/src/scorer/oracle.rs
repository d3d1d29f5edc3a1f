use super::{ForwardCounter, TokenScorer, TrainingExample};
use crate::error::Result;
use crate::markup::{parse_annotated_with, Document, TokenId, Tokenizer, Vocab};

/// Scorer that knows the gold sequence.
///
/// On any prefix of the gold sequence it puts `1 - eps` on the gold next
/// token and spreads `eps` evenly over the rest of the vocabulary. Off the
/// gold path it is uniform.
#[derive(Debug)]
pub struct OracleScorer {
    gold: Vec<TokenId>,
    vocab_size: usize,
    eps: f64,
    counter: ForwardCounter,
}

impl OracleScorer {
    pub const DEFAULT_EPS: f64 = 1e-6;

    pub fn new(gold: Vec<TokenId>, vocab_size: usize, eps: f64) -> Self {
        Self {
            gold,
            vocab_size,
            eps,
            counter: ForwardCounter::default(),
        }
    }

    pub fn from_example(example: &TrainingExample, vocab_size: usize) -> Self {
        Self::new(example.tokens.clone(), vocab_size, Self::DEFAULT_EPS)
    }

    /// Builds the oracle from a gold annotated sequence: the prompt is the
    /// plain document and the target its linearized annotation.
    pub fn from_annotated(seq: &str, vocab: &Vocab, tokenizer: &dyn Tokenizer) -> Result<Self> {
        let parsed = parse_annotated_with(seq, tokenizer)?;
        let doc = Document::new("", parsed.text, tokenizer);
        let ex = TrainingExample::from_annotated(&doc, &parsed.annotations, vocab, tokenizer)?;
        Ok(Self::from_example(&ex, vocab.len()))
    }
}

impl TokenScorer for OracleScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Vec<f64> {
        self.counter.tick();
        let v = self.vocab_size;
        let on_path = prefix.len() < self.gold.len() && self.gold.starts_with(prefix);
        if !on_path || v == 1 {
            return vec![-(v as f64).ln(); v];
        }
        let mut out = vec![(self.eps / (v - 1) as f64).ln(); v];
        out[self.gold[prefix.len()] as usize] = (1.0 - self.eps).ln();
        out
    }

    fn forward_count(&self) -> u64 {
        self.counter.get()
    }
}
