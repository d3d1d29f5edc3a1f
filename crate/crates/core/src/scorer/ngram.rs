use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{ForwardCounter, TokenScorer, TrainingExample};
use crate::error::{Error, Result};
use crate::markup::{TokenId, Vocab};

const MAGIC: &[u8; 4] = b"GDNG";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    /// Additive smoothing constant added to every count.
    pub smoothing: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Additive-smoothed n-gram language model.
///
/// The context of position `i` is the previous `min(order - 1, i)` tokens.
/// `P(w | ctx) = (c(ctx, w) + smoothing) / (c(ctx) + smoothing * V)`; unseen
/// contexts yield the uniform distribution. Counts are collected on target
/// positions only.
#[derive(Debug)]
pub struct NgramScorer {
    config: NgramConfig,
    vocab_size: usize,
    contexts: HashMap<Vec<TokenId>, ContextCounts>,
    counter: ForwardCounter,
}

impl NgramScorer {
    pub fn train(examples: &[TrainingExample], vocab_size: usize, config: NgramConfig) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("n-gram training corpus is empty".into()));
        }
        if config.order == 0 || config.smoothing <= 0.0 || !config.smoothing.is_finite() {
            return Err(Error::Config(format!(
                "order must be >= 1 and smoothing > 0 (got {}, {})",
                config.order, config.smoothing
            )));
        }
        let mut contexts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for ex in examples {
            for i in ex.prompt_len..ex.tokens.len() {
                let t = ex.tokens[i];
                if t as usize >= vocab_size {
                    return Err(Error::Vocabulary(format!("token id {t}")));
                }
                let ctx = Self::context(&ex.tokens[..i], config.order);
                let entry = contexts.entry(ctx.to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(t).or_default() += 1;
            }
        }
        Ok(Self {
            config,
            vocab_size,
            contexts,
            counter: ForwardCounter::default(),
        })
    }

    fn context(prefix: &[TokenId], order: usize) -> &[TokenId] {
        &prefix[prefix.len().saturating_sub(order - 1)..]
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    /// Probability without touching the forward counter.
    pub fn prob(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        let a = self.config.smoothing;
        let v = self.vocab_size as f64;
        match self.contexts.get(Self::context(prefix, self.config.order)) {
            Some(c) => (c.next.get(&token).copied().unwrap_or(0) as f64 + a) / (c.total as f64 + a * v),
            None => 1.0 / v,
        }
    }

    /// Writes the model and its vocabulary.
    ///
    /// Layout (all integers little-endian):
    /// `"GDNG"`, version `u32`, vocab size `u32`, order `u32`, smoothing
    /// `f64`, surface count `u32`, then each ordinary surface as `u32`
    /// byte length + UTF-8 bytes, then context count `u32`, then per
    /// context in ascending lexicographic order: length `u32`, ids `u32`
    /// each, total `u64`, entry count `u32`, and `(id u32, count u64)`
    /// pairs in ascending id order.
    pub fn save(&self, path: &Path, vocab: &Vocab) -> Result<()> {
        if vocab.len() != self.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} entries but the scorer expects {}",
                vocab.len(),
                self.vocab_size
            )));
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);
        put_u32(&mut buf, self.vocab_size as u32);
        put_u32(&mut buf, self.config.order as u32);
        buf.extend_from_slice(&self.config.smoothing.to_le_bytes());
        let surfaces = vocab.ordinary_surfaces();
        put_u32(&mut buf, surfaces.len() as u32);
        for s in surfaces {
            put_u32(&mut buf, s.len() as u32);
            buf.extend_from_slice(s.as_bytes());
        }
        let sorted: BTreeMap<&Vec<TokenId>, &ContextCounts> = self.contexts.iter().collect();
        put_u32(&mut buf, sorted.len() as u32);
        for (ctx, counts) in sorted {
            put_u32(&mut buf, ctx.len() as u32);
            for &t in ctx {
                put_u32(&mut buf, t);
            }
            buf.extend_from_slice(&counts.total.to_le_bytes());
            let next: BTreeMap<_, _> = counts.next.iter().collect();
            put_u32(&mut buf, next.len() as u32);
            for (&t, &c) in next {
                put_u32(&mut buf, t);
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Vocab)> {
        let data = fs::read(path)?;
        let mut r = Reader { data: &data, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not an n-gram scorer file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported scorer version {version}")));
        }
        let vocab_size = r.u32()? as usize;
        let order = r.u32()? as usize;
        let smoothing = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let n_surfaces = r.u32()? as usize;
        let mut surfaces = Vec::with_capacity(n_surfaces);
        for _ in 0..n_surfaces {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Format(e.to_string()))?;
            surfaces.push(s.to_string());
        }
        let vocab = Vocab::from_ordinary_surfaces(surfaces)?;
        if vocab.len() != vocab_size {
            return Err(Error::Format("vocabulary size mismatch".into()));
        }
        let n_ctx = r.u32()? as usize;
        let mut contexts = HashMap::with_capacity(n_ctx);
        for _ in 0..n_ctx {
            let len = r.u32()? as usize;
            let ctx = (0..len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let total = r.u64()?;
            let n_next = r.u32()? as usize;
            let mut next = HashMap::with_capacity(n_next);
            for _ in 0..n_next {
                let t = r.u32()?;
                next.insert(t, r.u64()?);
            }
            contexts.insert(ctx, ContextCounts { total, next });
        }
        if r.pos != data.len() {
            return Err(Error::Format("trailing bytes in scorer file".into()));
        }
        let config = NgramConfig { order, smoothing };
        if order == 0 {
            return Err(Error::Format("order 0".into()));
        }
        Ok((
            Self {
                config,
                vocab_size,
                contexts,
                counter: ForwardCounter::default(),
            },
            vocab,
        ))
    }
}

impl TokenScorer for NgramScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Vec<f64> {
        self.counter.tick();
        let a = self.config.smoothing;
        let v = self.vocab_size as f64;
        match self.contexts.get(Self::context(prefix, self.config.order)) {
            Some(c) => {
                let denom = (c.total as f64 + a * v).ln();
                let mut out = vec![a.ln() - denom; self.vocab_size];
                for (&t, &n) in &c.next {
                    out[t as usize] = (n as f64 + a).ln() - denom;
                }
                out
            }
            None => vec![-v.ln(); self.vocab_size],
        }
    }

    fn forward_count(&self) -> u64 {
        self.counter.get()
    }
}

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format("truncated scorer file".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{clm_loss, greedy_generate, UniformScorer};

    #[test]
    fn repeated_sequence_is_regenerated() {
        let ex = TrainingExample::new(vec![6, 4, 7, 8, 9, 10, 11], 2).unwrap();
        let corpus = vec![ex.clone(); 5];
        let s = NgramScorer::train(&corpus, 12, NgramConfig::default()).unwrap();
        assert_eq!(greedy_generate(&s, &ex.tokens[..2], 5), ex.target());
    }

    #[test]
    fn unigram_probabilities() {
        // 10 target tokens: 6×3, 7×5, 8×2 over V = 9
        let target = [6, 7, 7, 8, 6, 7, 7, 6, 8, 7];
        let mut tokens = vec![4];
        tokens.extend(target);
        let ex = TrainingExample::new(tokens, 1).unwrap();
        let s = NgramScorer::train(&[ex], 9, NgramConfig { order: 1, smoothing: 0.5 }).unwrap();
        let denom = 10.0 + 0.5 * 9.0;
        let expected = [(6, 3.5 / denom), (7, 5.5 / denom), (8, 2.5 / denom), (0, 0.5 / denom)];
        let lp = s.next_logprobs(&[1, 2, 3]);
        for (t, p) in expected {
            assert!((lp[t].exp() - p).abs() < 1e-12, "token {t}");
            assert!((s.prob(&[], t as TokenId) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn beats_uniform_on_training_corpus() {
        let corpus = vec![
            TrainingExample::new(vec![6, 7, 4, 6, 8, 7, 9], 3).unwrap(),
            TrainingExample::new(vec![9, 4, 9, 9, 7, 6], 2).unwrap(),
            TrainingExample::new(vec![4, 10, 11, 10, 11, 10], 1).unwrap(),
        ];
        let s = NgramScorer::train(&corpus, 12, NgramConfig::default()).unwrap();
        let u = UniformScorer::new(12).unwrap();
        let trained: f64 = corpus.iter().map(|e| clm_loss(&s, e).unwrap()).sum();
        let uniform: f64 = corpus.iter().map(|e| clm_loss(&u, e).unwrap()).sum();
        assert!(trained < uniform);
    }

    #[test]
    fn normalized() {
        let ex = TrainingExample::new(vec![6, 7, 8, 6, 7, 9], 1).unwrap();
        let s = NgramScorer::train(&[ex], 10, NgramConfig::default()).unwrap();
        for prefix in [&[6u32, 7][..], &[6], &[1, 2], &[]] {
            let total: f64 = s.next_logprobs(prefix).iter().map(|x| x.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn prompt_positions_not_counted() {
        let ex = TrainingExample::new(vec![6, 6, 6, 6, 7], 4).unwrap();
        let s = NgramScorer::train(&[ex], 8, NgramConfig { order: 1, smoothing: 1.0 }).unwrap();
        assert!((s.prob(&[], 6) - 1.0 / 9.0).abs() < 1e-12);
        assert!((s.prob(&[], 7) - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let ex = TrainingExample::new(vec![6, 7], 1).unwrap();
        assert!(NgramScorer::train(&[], 8, NgramConfig::default()).is_err());
        assert!(NgramScorer::train(std::slice::from_ref(&ex), 8, NgramConfig { order: 0, smoothing: 0.1 }).is_err());
        assert!(NgramScorer::train(&[ex], 8, NgramConfig { order: 2, smoothing: 0.0 }).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let mut vocab = Vocab::new();
        for s in ["a", " b", " c", "d"] {
            vocab.insert(s);
        }
        let ex = TrainingExample::new(vec![6, 4, 7, 8, 9, 7, 8], 2).unwrap();
        let s = NgramScorer::train(&[ex], vocab.len(), NgramConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.bin");
        s.save(&path, &vocab).unwrap();
        let (loaded, v2) = NgramScorer::load(&path).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(loaded.config(), s.config());
        for prefix in [&[6u32, 4][..], &[7, 8], &[9]] {
            assert_eq!(loaded.next_logprobs(prefix), s.next_logprobs(prefix));
        }
        let bytes = std::fs::read(&path).unwrap();
        let again = dir.path().join("lm2.bin");
        loaded.save(&again, &v2).unwrap();
        assert_eq!(std::fs::read(&again).unwrap(), bytes);
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(NgramScorer::load(&path), Err(Error::Format(_))));
    }
}
