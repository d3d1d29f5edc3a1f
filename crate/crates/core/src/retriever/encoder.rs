use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chunk::DocChunk;
use crate::error::{Error, Result};
use crate::kb::EntityRecord;
use crate::markup::{RuleTokenizer, Tokenizer};

/// Sparse bag-of-words histogram: `(bucket, count)` sorted by bucket.
pub type SparseFeatures = Vec<(u32, f64)>;

/// Maps words to hash buckets. Words are trimmed and lower-cased; the
/// boundary markers `[CLS]` and `[SEP]` wrap every input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHasher {
    pub buckets: u32,
    pub seed: u64,
}

impl FeatureHasher {
    pub fn bucket(&self, word: &str) -> u32 {
        (fnv1a(self.seed, word.as_bytes()) % u64::from(self.buckets)) as u32
    }

    pub fn features<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> SparseFeatures {
        let mut buckets: Vec<u32> = vec![self.bucket("[CLS]")];
        for w in words {
            let w = w.trim();
            if !w.is_empty() {
                buckets.push(self.bucket(&w.to_lowercase()));
            }
        }
        buckets.push(self.bucket("[SEP]"));
        buckets.sort_unstable();
        let mut out: SparseFeatures = Vec::with_capacity(buckets.len());
        for b in buckets {
            match out.last_mut() {
                Some((last, n)) if *last == b => *n += 1.0,
                _ => out.push((b, 1.0)),
            }
        }
        out
    }

    pub fn chunk_features(&self, chunk: &DocChunk) -> SparseFeatures {
        self.features(chunk.tokens.iter().map(String::as_str))
    }

    /// Title followed by description.
    pub fn entity_features(&self, entity: &EntityRecord) -> SparseFeatures {
        let text = format!("{} {}", entity.title, entity.description);
        let words: Vec<&str> = RuleTokenizer.split(&text).into_iter().map(|r| &text[r]).collect();
        self.features(words)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Linear projection of a hashed histogram: row `b` of `weights` is the
/// `dim`-vector contributed by one occurrence of bucket `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub dim: usize,
    pub buckets: usize,
    pub weights: Vec<f64>,
}

impl Tower {
    pub fn zeros(buckets: usize, dim: usize) -> Self {
        Self {
            dim,
            buckets,
            weights: vec![0.0; buckets * dim],
        }
    }

    pub fn random(buckets: usize, dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..buckets * dim).map(|_| rng.gen_range(-scale..=scale)).collect();
        Self { dim, buckets, weights }
    }

    pub fn row(&self, bucket: u32) -> &[f64] {
        let b = bucket as usize;
        &self.weights[b * self.dim..(b + 1) * self.dim]
    }

    pub fn row_mut(&mut self, bucket: u32) -> &mut [f64] {
        let b = bucket as usize;
        &mut self.weights[b * self.dim..(b + 1) * self.dim]
    }

    pub fn encode(&self, features: &SparseFeatures) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(b, n) in features {
            for (o, w) in out.iter_mut().zip(self.row(b)) {
                *o += n * w;
            }
        }
        out
    }
}

/// Two towers that share no parameters: one for document chunks, one for
/// entities.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub hasher: FeatureHasher,
    pub chunk_tower: Tower,
    pub entity_tower: Tower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub buckets: u32,
    pub hash_seed: u64,
    /// Half-width of the uniform initialization range.
    pub init_scale: f64,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            buckets: 1 << 15,
            hash_seed: 0x5eed,
            init_scale: 0.1,
            init_seed: 17,
        }
    }
}

impl DualEncoder {
    /// Randomly initialized towers drawn from independent seeds.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        if config.dim == 0 || config.buckets == 0 {
            return Err(Error::Config("encoder dim and bucket count must be positive".into()));
        }
        let b = config.buckets as usize;
        Ok(Self {
            hasher: FeatureHasher {
                buckets: config.buckets,
                seed: config.hash_seed,
            },
            chunk_tower: Tower::random(b, config.dim, config.init_scale, config.init_seed),
            entity_tower: Tower::random(b, config.dim, config.init_scale, config.init_seed.wrapping_add(1)),
        })
    }

    pub fn dim(&self) -> usize {
        self.chunk_tower.dim
    }

    pub fn encode_chunk(&self, chunk: &DocChunk) -> Vec<f64> {
        self.chunk_tower.encode(&self.hasher.chunk_features(chunk))
    }

    pub fn encode_entity(&self, entity: &EntityRecord) -> Vec<f64> {
        self.entity_tower.encode(&self.hasher.entity_features(entity))
    }

    /// Binary layout (little-endian): `"GDDE"`, version `u32`, dim `u32`,
    /// buckets `u32`, hash seed `u64`, then the chunk tower and the entity
    /// tower weights as `f64`, row-major by bucket.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + 16 * self.chunk_tower.weights.len());
        buf.extend_from_slice(b"GDDE");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        buf.extend_from_slice(&self.hasher.buckets.to_le_bytes());
        buf.extend_from_slice(&self.hasher.seed.to_le_bytes());
        for w in self.chunk_tower.weights.iter().chain(&self.entity_tower.weights) {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let data = std::fs::read(path)?;
        let bad = |m: &str| Error::Format(format!("encoder file: {m}"));
        if data.len() < 24 || &data[..4] != b"GDDE" {
            return Err(bad("bad header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(data[o..o + 4].try_into().unwrap());
        if u32_at(4) != 1 {
            return Err(bad("unsupported version"));
        }
        let dim = u32_at(8) as usize;
        let buckets = u32_at(12);
        let seed = u64::from_le_bytes(data[16..24].try_into().unwrap());
        let n = buckets as usize * dim;
        if data.len() != 24 + 16 * n || dim == 0 || buckets == 0 {
            return Err(bad("size mismatch"));
        }
        let read = |start: usize| -> Vec<f64> {
            data[start..start + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        Ok(Self {
            hasher: FeatureHasher { buckets, seed },
            chunk_tower: Tower {
                dim,
                buckets: buckets as usize,
                weights: read(24),
            },
            entity_tower: Tower {
                dim,
                buckets: buckets as usize,
                weights: read(24 + 8 * n),
            },
        })
    }
}

/// Inner product of a chunk vector and an entity vector.
pub fn score(chunk_vec: &[f64], entity_vec: &[f64]) -> Result<f64> {
    if chunk_vec.len() != entity_vec.len() {
        return Err(Error::DimMismatch {
            left: chunk_vec.len(),
            right: entity_vec.len(),
        });
    }
    Ok(chunk_vec.iter().zip(entity_vec).map(|(a, b)| a * b).sum())
}
