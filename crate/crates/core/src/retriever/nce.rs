use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::encoder::{DualEncoder, SparseFeatures};
use crate::error::{Error, Result};
use crate::scorer::log_sum_exp;

/// Multi-label NCE loss from raw scores: one instance per gold entity, each
/// contrasting that gold score against all negative scores.
///
/// `sum_g [ -s_g + log(exp(s_g) + sum_n exp(s_n)) ]`
pub fn nce_loss_from_scores(gold_scores: &[f64], negative_scores: &[f64]) -> f64 {
    gold_scores
        .iter()
        .map(|&s| {
            let lse = log_sum_exp(std::iter::once(s).chain(negative_scores.iter().copied()));
            lse - s
        })
        .sum()
}

fn check_disjoint(gold: &[usize], negatives: &[usize]) -> Result<()> {
    let gold: HashSet<usize> = gold.iter().copied().collect();
    match negatives.iter().find(|n| gold.contains(n)) {
        Some(&n) => Err(Error::GoldNegativeOverlap(n)),
        None => Ok(()),
    }
}

/// NCE loss of a chunk against gold and negative entities, given the
/// hashed features of every knowledge-base entity.
pub fn nce_loss(
    encoder: &DualEncoder,
    chunk: &SparseFeatures,
    gold: &[usize],
    negatives: &[usize],
    entity_features: &[SparseFeatures],
) -> Result<f64> {
    check_disjoint(gold, negatives)?;
    let x = encoder.chunk_tower.encode(chunk);
    let s = |e: usize| dot(&x, &encoder.entity_tower.encode(&entity_features[e]));
    let gs: Vec<f64> = gold.iter().map(|&e| s(e)).collect();
    let ns: Vec<f64> = negatives.iter().map(|&e| s(e)).collect();
    Ok(nce_loss_from_scores(&gs, &ns))
}

/// Sparse parameter gradient: bucket row → gradient of that row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub chunk: BTreeMap<u32, Vec<f64>>,
    pub entity: BTreeMap<u32, Vec<f64>>,
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for row in self.chunk.values_mut().chain(self.entity.values_mut()) {
            row.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn accumulate(&mut self, other: Gradients) {
        for (map, src) in [(&mut self.chunk, other.chunk), (&mut self.entity, other.entity)] {
            for (b, row) in src {
                match map.get_mut(&b) {
                    Some(acc) => acc.iter_mut().zip(&row).for_each(|(a, g)| *a += g),
                    None => {
                        map.insert(b, row);
                    }
                }
            }
        }
    }

    /// Plain SGD step.
    pub fn apply(&self, encoder: &mut DualEncoder, learning_rate: f64) {
        for (&b, g) in &self.chunk {
            for (w, gi) in encoder.chunk_tower.row_mut(b).iter_mut().zip(g) {
                *w -= learning_rate * gi;
            }
        }
        for (&b, g) in &self.entity {
            for (w, gi) in encoder.entity_tower.row_mut(b).iter_mut().zip(g) {
                *w -= learning_rate * gi;
            }
        }
    }
}

/// Loss and analytic gradient with respect to both towers.
pub fn nce_gradients(
    encoder: &DualEncoder,
    chunk: &SparseFeatures,
    gold: &[usize],
    negatives: &[usize],
    entity_features: &[SparseFeatures],
) -> Result<(f64, Gradients)> {
    check_disjoint(gold, negatives)?;
    let dim = encoder.dim();
    let x = encoder.chunk_tower.encode(chunk);
    let mut vecs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &e in gold.iter().chain(negatives) {
        vecs.entry(e)
            .or_insert_with(|| encoder.entity_tower.encode(&entity_features[e]));
    }
    let score = |e: usize| dot(&x, &vecs[&e]);
    let neg_scores: Vec<f64> = negatives.iter().map(|&e| score(e)).collect();

    // dL/ds for every entity appearing in any instance
    let mut dscore: BTreeMap<usize, f64> = BTreeMap::new();
    let mut loss = 0.0;
    for &g in gold {
        let sg = score(g);
        let lse = log_sum_exp(std::iter::once(sg).chain(neg_scores.iter().copied()));
        loss += lse - sg;
        *dscore.entry(g).or_default() += (sg - lse).exp() - 1.0;
        for (&n, &sn) in negatives.iter().zip(&neg_scores) {
            *dscore.entry(n).or_default() += (sn - lse).exp();
        }
    }

    let mut dx = vec![0.0; dim];
    let mut grads = Gradients::default();
    for (&e, &ds) in &dscore {
        let ev = &vecs[&e];
        for (d, v) in dx.iter_mut().zip(ev) {
            *d += ds * v;
        }
        for &(b, n) in &entity_features[e] {
            let row = grads.entity.entry(b).or_insert_with(|| vec![0.0; dim]);
            for (r, xi) in row.iter_mut().zip(&x) {
                *r += n * ds * xi;
            }
        }
    }
    for &(b, n) in chunk {
        let row = grads.chunk.entry(b).or_insert_with(|| vec![0.0; dim]);
        for (r, d) in row.iter_mut().zip(&dx) {
            *r += n * d;
        }
    }
    Ok((loss, grads))
}

/// Negatives for one chunk, split by how they were chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSample {
    pub random: Vec<usize>,
    pub hard: Vec<usize>,
}

impl NegativeSample {
    pub fn all(&self) -> Vec<usize> {
        self.random.iter().chain(&self.hard).copied().collect()
    }
}

/// Draws `count` negatives from `pool` minus `gold`: `floor(0.9 * count)`
/// uniformly at random without replacement, the rest as the
/// highest-scoring incorrect entities under the current model (ties broken
/// by lower index). Hard negatives are chosen first and excluded from the
/// random draw.
pub fn sample_negatives<R: Rng + ?Sized>(
    chunk_vec: &[f64],
    entity_vecs: &[Vec<f64>],
    gold: &[usize],
    pool: &[usize],
    count: usize,
    rng: &mut R,
) -> Result<NegativeSample> {
    let gold: HashSet<usize> = gold.iter().copied().collect();
    let mut seen = HashSet::new();
    let candidates: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|e| !gold.contains(e) && seen.insert(*e))
        .collect();
    if candidates.len() < count {
        return Err(Error::InsufficientPool {
            requested: count,
            available: candidates.len(),
        });
    }
    let n_random = count * 9 / 10;
    let n_hard = count - n_random;
    let mut ranked: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&e| (e, dot(chunk_vec, &entity_vecs[e])))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let hard: Vec<usize> = ranked.iter().take(n_hard).map(|&(e, _)| e).collect();
    let hard_set: HashSet<usize> = hard.iter().copied().collect();
    let rest: Vec<usize> = candidates.into_iter().filter(|e| !hard_set.contains(e)).collect();
    let random: Vec<usize> = rest.choose_multiple(rng, n_random).copied().collect();
    Ok(NegativeSample { random, hard })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::EncoderConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_scores_give_ln_two() {
        assert!((nce_loss_from_scores(&[0.3], &[0.3]) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn dominant_gold_gives_zero() {
        assert!(nce_loss_from_scores(&[1e4], &[0.0, 1.0]) < 1e-300);
        assert_eq!(nce_loss_from_scores(&[1e300], &[0.0]), 0.0);
    }

    #[test]
    fn matches_display_formula() {
        let gold: [f64; 2] = [0.12, -0.4];
        let negs: [f64; 3] = [0.05, 0.33, -0.2];
        let mut direct = 0.0;
        for &g in &gold {
            let denom = g.exp() + negs.iter().map(|n: &f64| n.exp()).sum::<f64>();
            direct += (g.exp() / denom).ln();
        }
        assert!((nce_loss_from_scores(&gold, &negs) + direct).abs() < 1e-12);
    }

    #[test]
    fn overlap_rejected() {
        let enc = DualEncoder::new(EncoderConfig { dim: 4, buckets: 16, ..Default::default() }).unwrap();
        let feats = vec![vec![(1, 1.0)], vec![(2, 1.0)]];
        assert!(matches!(
            nce_loss(&enc, &vec![(3, 1.0)], &[0], &[0, 1], &feats),
            Err(Error::GoldNegativeOverlap(0))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = EncoderConfig { dim: 3, buckets: 8, init_scale: 0.5, ..Default::default() };
        let enc = DualEncoder::new(cfg).unwrap();
        let feats: Vec<SparseFeatures> = vec![vec![(0, 1.0), (2, 2.0)], vec![(1, 1.0), (2, 1.0)], vec![(3, 1.0), (5, 1.0)], vec![(0, 1.0), (7, 1.0)]];
        let x: SparseFeatures = vec![(2, 1.0), (4, 1.0), (6, 3.0)];
        let (gold, negs) = ([0usize, 3], [1usize, 2]);
        let (_, grads) = nce_gradients(&enc, &x, &gold, &negs, &feats).unwrap();
        let h = 1e-6;
        for entity_side in [false, true] {
            for b in 0..8u32 {
                for k in 0..3 {
                    let bump = |delta: f64| {
                        let mut e = enc.clone();
                        let tower = if entity_side { &mut e.entity_tower } else { &mut e.chunk_tower };
                        tower.row_mut(b)[k] += delta;
                        nce_loss(&e, &x, &gold, &negs, &feats).unwrap()
                    };
                    let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                    let map = if entity_side { &grads.entity } else { &grads.chunk };
                    let analytic = map.get(&b).map_or(0.0, |r| r[k]);
                    assert!((numeric - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()), "{entity_side} {b} {k}: {numeric} vs {analytic}");
                }
            }
        }
    }

    fn vecs() -> (Vec<f64>, Vec<Vec<f64>>) {
        let q = vec![1.0, 0.5];
        let ents: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        (q, ents)
    }

    #[test]
    fn ninety_ten_split() {
        let (q, ents) = vecs();
        let pool: Vec<usize> = (0..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_negatives(&q, &ents, &[3, 4], &pool, 10, &mut rng).unwrap();
        assert_eq!((s.random.len(), s.hard.len()), (9, 1));
        let all = s.all();
        assert!(!all.contains(&3) && !all.contains(&4));
        let unique: HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 10);
    }

    #[test]
    fn hard_negative_is_argmax_over_non_gold() {
        let (q, ents) = vecs();
        let pool: Vec<usize> = (0..20).collect();
        let gold = [7];
        let mut best = None;
        for e in 0..20 {
            if gold.contains(&e) {
                continue;
            }
            let s = q[0] * ents[e][0] + q[1] * ents[e][1];
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((e, s));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = sample_negatives(&q, &ents, &gold, &pool, 10, &mut rng).unwrap();
        assert_eq!(s.hard, vec![best.unwrap().0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let (q, ents) = vecs();
        let pool: Vec<usize> = (0..20).collect();
        let a = sample_negatives(&q, &ents, &[], &pool, 12, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_negatives(&q, &ents, &[], &pool, 12, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn insufficient_pool() {
        let (q, ents) = vecs();
        let r = sample_negatives(&q, &ents, &[0, 1], &[0, 1, 2, 3], 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::InsufficientPool { requested: 3, available: 2 })));
    }
}
