use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::chunk::{ChunkExample, DEFAULT_CHUNK_LEN};
use super::encoder::{DualEncoder, SparseFeatures};
use super::nce::{nce_gradients, nce_loss, sample_negatives, Gradients};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Negatives per NCE instance. Clamped to the number of non-gold
    /// entities when the knowledge base is smaller.
    pub negatives: usize,
    pub seed: u64,
    pub chunk_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.05,
            negatives: 32,
            seed: 0,
            chunk_len: DEFAULT_CHUNK_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean evaluation loss before the first step.
    pub initial_loss: f64,
    /// Mean evaluation loss after the last step.
    pub final_loss: f64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

struct Prepared {
    chunks: Vec<SparseFeatures>,
    golds: Vec<Vec<usize>>,
    entities: Vec<SparseFeatures>,
}

fn prepare(encoder: &DualEncoder, examples: &[ChunkExample], kb: &KnowledgeBase) -> Prepared {
    Prepared {
        chunks: examples.iter().map(|e| encoder.hasher.chunk_features(&e.chunk)).collect(),
        golds: examples.iter().map(|e| e.gold.clone()).collect(),
        entities: kb.iter().map(|e| encoder.hasher.entity_features(e)).collect(),
    }
}

fn negative_count(requested: usize, kb_len: usize, gold: &[usize]) -> usize {
    requested.min(kb_len.saturating_sub(gold.len()))
}

/// Mean loss over all examples with uniformly drawn negatives from a fixed
/// seed, so that evaluations before and after training see the same
/// negatives.
fn eval_loss(encoder: &DualEncoder, data: &Prepared, requested: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
    let n = data.entities.len();
    let mut total = 0.0;
    for (x, gold) in data.chunks.iter().zip(&data.golds) {
        let pool: Vec<usize> = (0..n).filter(|e| !gold.contains(e)).collect();
        let count = negative_count(requested, n, gold);
        let negs: Vec<usize> = pool.choose_multiple(&mut rng, count).copied().collect();
        total += nce_loss(encoder, x, gold, &negs, &data.entities)?;
    }
    Ok(total / data.chunks.len() as f64)
}

/// Mean evaluation loss of `encoder` on `examples` (same negatives as the
/// evaluation performed by [`train_retriever`] for the same seed).
pub fn mean_loss(
    encoder: &DualEncoder,
    examples: &[ChunkExample],
    kb: &KnowledgeBase,
    config: &TrainConfig,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Config("retriever training corpus is empty".into()));
    }
    eval_loss(encoder, &prepare(encoder, examples, kb), config.negatives, config.seed)
}

/// Minimizes the multi-label NCE loss with plain minibatch SGD. Each batch
/// re-encodes the knowledge base so that hard negatives reflect the current
/// parameters.
pub fn train_retriever(
    mut encoder: DualEncoder,
    examples: &[ChunkExample],
    kb: &KnowledgeBase,
    config: &TrainConfig,
) -> Result<(DualEncoder, TrainReport)> {
    if examples.is_empty() {
        return Err(Error::Config("retriever training corpus is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let data = prepare(&encoder, examples, kb);
    let initial_loss = eval_loss(&encoder, &data, config.negatives, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pool: Vec<usize> = (0..kb.len()).collect();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let entity_vecs: Vec<Vec<f64>> =
                data.entities.iter().map(|f| encoder.entity_tower.encode(f)).collect();
            let mut grads = Gradients::default();
            for &i in batch {
                let gold = &data.golds[i];
                let x = encoder.chunk_tower.encode(&data.chunks[i]);
                let count = negative_count(config.negatives, kb.len(), gold);
                let negs = sample_negatives(&x, &entity_vecs, gold, &pool, count, &mut rng)?.all();
                let (loss, g) = nce_gradients(&encoder, &data.chunks[i], gold, &negs, &data.entities)?;
                epoch_total += loss;
                grads.accumulate(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            grads.apply(&mut encoder, config.learning_rate);
            steps += 1;
        }
        let mean = epoch_total / examples.len() as f64;
        log::debug!("retriever epoch loss {mean:.6}");
        if !mean.is_finite() {
            return Err(Error::Config(format!(
                "training diverged (epoch loss {mean}); lower learning_rate"
            )));
        }
        epoch_losses.push(mean);
    }

    let final_loss = eval_loss(&encoder, &data, config.negatives, config.seed)?;
    Ok((
        encoder,
        TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
            steps,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::{chunk_examples, EncoderConfig};
    use crate::synthetic::separable_corpus;

    fn setup() -> (KnowledgeBase, Vec<ChunkExample>, DualEncoder) {
        let (kb, docs) = separable_corpus(8, 3, 4);
        let ex = chunk_examples(&docs, &kb, DEFAULT_CHUNK_LEN);
        let enc = DualEncoder::new(EncoderConfig {
            dim: 8,
            buckets: 256,
            ..Default::default()
        })
        .unwrap();
        (kb, ex, enc)
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let (kb, ex, enc) = setup();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            ..Default::default()
        };
        let (a, ra) = train_retriever(enc.clone(), &ex, &kb, &cfg).unwrap();
        let (b, rb) = train_retriever(enc, &ex, &kb, &cfg).unwrap();
        assert!(ra.final_loss < ra.initial_loss);
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert_eq!(ra.steps, 5 * ex.len().div_ceil(4));
    }

    #[test]
    fn negatives_clamped_to_small_kb() {
        let (kb, ex, enc) = setup();
        let cfg = TrainConfig {
            epochs: 1,
            negatives: 1000,
            ..Default::default()
        };
        assert!(train_retriever(enc, &ex, &kb, &cfg).is_ok());
    }

    #[test]
    fn rejects_empty_corpus_and_divergence() {
        let (kb, ex, enc) = setup();
        assert!(matches!(
            train_retriever(enc.clone(), &[], &kb, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
        let wild = TrainConfig {
            epochs: 50,
            learning_rate: 1e9,
            ..Default::default()
        };
        assert!(matches!(train_retriever(enc, &ex, &kb, &wild), Err(Error::Config(_))));
    }
}
