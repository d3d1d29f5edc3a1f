//! Next-token scorers with forward-call accounting, and the masked
//! next-token-prediction loss used to train them.

mod ngram;
mod oracle;

use std::sync::atomic::{AtomicU64, Ordering};

pub use ngram::{NgramConfig, NgramScorer};
pub use oracle::OracleScorer;

use crate::error::{Error, Result};
use crate::markup::{linearize, prompt_ids, Annotation, Document, TokenId, Tokenizer, Vocab};

/// Source of next-token log-probabilities.
///
/// Every call to [`TokenScorer::next_logprobs`] counts as one forward call.
/// The returned vector has length `vocab_size()` and its exponentials sum
/// to one. Results are deterministic in the prefix.
pub trait TokenScorer: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn next_logprobs(&self, prefix: &[TokenId]) -> Vec<f64>;
    fn forward_count(&self) -> u64;
}

/// Monotone forward-call counter shared by scorer implementations.
#[derive(Debug, Default)]
pub struct ForwardCounter(AtomicU64);

impl ForwardCounter {
    pub fn tick(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for ForwardCounter {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(self.get()))
    }
}

/// Uniform distribution over the vocabulary.
#[derive(Debug)]
pub struct UniformScorer {
    vocab_size: usize,
    counter: ForwardCounter,
}

impl UniformScorer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be at least 1".into()));
        }
        Ok(Self {
            vocab_size,
            counter: ForwardCounter::default(),
        })
    }
}

impl TokenScorer for UniformScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logprobs(&self, _prefix: &[TokenId]) -> Vec<f64> {
        self.counter.tick();
        vec![-(self.vocab_size as f64).ln(); self.vocab_size]
    }

    fn forward_count(&self) -> u64 {
        self.counter.get()
    }
}

/// Deterministic pseudo-random distribution: the logits are a hash of the
/// prefix and the seed. Useful as an adversarial stand-in for a trained
/// model.
#[derive(Debug)]
pub struct RandomScorer {
    vocab_size: usize,
    seed: u64,
    counter: ForwardCounter,
}

impl RandomScorer {
    pub fn new(vocab_size: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be at least 1".into()));
        }
        Ok(Self {
            vocab_size,
            seed,
            counter: ForwardCounter::default(),
        })
    }
}

impl TokenScorer for RandomScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Vec<f64> {
        self.counter.tick();
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for &t in prefix {
            h = (h ^ u64::from(t)).wrapping_mul(0x100_0000_01b3);
        }
        let logits: Vec<f64> = (0..self.vocab_size)
            .map(|i| {
                let x = (h ^ (i as u64).wrapping_mul(0x9e37_79b9)).wrapping_mul(0x2545_f491_4f6c_dd1d);
                (x >> 11) as f64 / (1u64 << 53) as f64 * 4.0
            })
            .collect();
        let z = log_sum_exp(logits.iter().copied());
        logits.into_iter().map(|l| l - z).collect()
    }

    fn forward_count(&self) -> u64 {
        self.counter.get()
    }
}

/// Prompt followed by target: `tokens[..prompt_len]` is the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub tokens: Vec<TokenId>,
    pub prompt_len: usize,
}

impl TrainingExample {
    pub fn new(tokens: Vec<TokenId>, prompt_len: usize) -> Result<Self> {
        if prompt_len == 0 || prompt_len > tokens.len() {
            return Err(Error::InvalidExample(format!(
                "prompt length {prompt_len} outside 1..={}",
                tokens.len()
            )));
        }
        Ok(Self { tokens, prompt_len })
    }

    /// Document prompt (document tokens + separator) followed by the
    /// linearized annotated document.
    pub fn from_annotated(doc: &Document, anns: &[Annotation], vocab: &Vocab, tokenizer: &dyn Tokenizer) -> Result<Self> {
        let mut tokens = prompt_ids(doc, vocab);
        let prompt_len = tokens.len();
        tokens.extend(linearize(doc, anns, vocab, tokenizer)?);
        Self::new(tokens, prompt_len)
    }

    pub fn target(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }
}

/// Next-token prediction loss summed over target positions only; prompt
/// positions contribute nothing.
pub fn clm_loss(scorer: &dyn TokenScorer, example: &TrainingExample) -> Result<f64> {
    if example.prompt_len == example.tokens.len() {
        return Err(Error::EmptyTarget {
            prompt_len: example.prompt_len,
        });
    }
    let mut loss = 0.0;
    for i in example.prompt_len..example.tokens.len() {
        let lp = scorer.next_logprobs(&example.tokens[..i]);
        loss -= lp[example.tokens[i] as usize];
    }
    Ok(loss)
}

/// Index of the largest candidate score; ties go to the lowest token id.
pub fn argmax_among(logprobs: &[f64], candidates: impl IntoIterator<Item = TokenId>) -> Option<TokenId> {
    let mut best: Option<(TokenId, f64)> = None;
    for t in candidates {
        let s = logprobs[t as usize];
        best = match best {
            Some((bt, bs)) if bs > s || (bs == s && bt < t) => Some((bt, bs)),
            _ => Some((t, s)),
        };
    }
    best.map(|(t, _)| t)
}

/// Unconstrained greedy continuation of `prompt` for up to `max_new` tokens.
pub fn greedy_generate(scorer: &dyn TokenScorer, prompt: &[TokenId], max_new: usize) -> Vec<TokenId> {
    let mut seq = prompt.to_vec();
    for _ in 0..max_new {
        let lp = scorer.next_logprobs(&seq);
        let next = argmax_among(&lp, 0..lp.len() as TokenId).expect("non-empty vocabulary");
        seq.push(next);
    }
    seq.split_off(prompt.len())
}

/// `log(sum(exp(xs)))`, stable for large magnitudes.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
