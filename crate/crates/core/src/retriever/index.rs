use std::collections::BTreeSet;
use std::path::Path;

use super::chunk::{chunk_document, ChunkExample};
use super::encoder::DualEncoder;
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::markup::Document;

/// Cached entity embeddings, one row per knowledge-base entity in KB order.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityIndex {
    dim: usize,
    titles: Vec<String>,
    data: Vec<f32>,
}

impl EntityIndex {
    pub fn from_rows(titles: Vec<String>, rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch { left: dim, right: r.len() });
            }
            data.extend(r.iter().map(|&x| x as f32));
        }
        if titles.len() != rows.len() {
            return Err(Error::Format("index title count differs from row count".into()));
        }
        Ok(Self { dim, titles, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Inner product of the query with every row.
    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch { left: query.len(), right: self.dim });
        }
        Ok((0..self.len())
            .map(|i| self.row(i).iter().zip(query).map(|(&a, b)| f64::from(a) * b).sum())
            .collect())
    }

    /// Exact top-`k` entity indices by inner product, best first. Equal
    /// scores are ordered by KB position. `k` larger than the index returns
    /// every entity.
    pub fn retrieve_topk(&self, query: &[f64], k: usize) -> Result<Vec<usize>> {
        let scores = self.scores(query)?;
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
        let k = k.min(idx.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, cmp);
            idx.truncate(k);
        }
        idx.sort_unstable_by(cmp);
        Ok(idx)
    }

    /// Binary layout (little-endian): `"EIDX"`, version `u32`, dim `u32`,
    /// rows `u32`, `rows * dim` `f32` values row-major, then per row a `u32`
    /// byte length followed by the UTF-8 title.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 4 * self.data.len());
        buf.extend_from_slice(b"EIDX");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for t in &self.titles {
            buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
            buf.extend_from_slice(t.as_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let bad = |m: &str| Error::Format(format!("index file: {m}"));
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4).ok_or_else(|| bad("truncated"))? != b"EIDX" {
            return Err(bad("bad magic"));
        }
        if cur.u32().ok_or_else(|| bad("truncated"))? != 1 {
            return Err(bad("unsupported version"));
        }
        let dim = cur.u32().ok_or_else(|| bad("truncated"))? as usize;
        let rows = cur.u32().ok_or_else(|| bad("truncated"))? as usize;
        let raw = cur.take(4 * dim * rows).ok_or_else(|| bad("truncated rows"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut titles = Vec::with_capacity(rows);
        for _ in 0..rows {
            let n = cur.u32().ok_or_else(|| bad("truncated titles"))? as usize;
            let t = cur.take(n).ok_or_else(|| bad("truncated titles"))?;
            titles.push(String::from_utf8(t.to_vec()).map_err(|_| bad("title is not UTF-8"))?);
        }
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { dim, titles, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Encodes every knowledge-base entity with the entity tower.
pub fn build_index(encoder: &DualEncoder, kb: &KnowledgeBase) -> EntityIndex {
    let rows: Vec<Vec<f64>> = kb.iter().map(|e| encoder.encode_entity(e)).collect();
    EntityIndex::from_rows(kb.titles().map(str::to_string).collect(), &rows, encoder.dim())
        .expect("encoder output has the encoder dimension")
}

/// Union of the per-chunk top-`k` entities over all windows of the
/// document, as sorted KB indices.
pub fn retrieve_for_document(
    encoder: &DualEncoder,
    index: &EntityIndex,
    doc: &Document,
    k: usize,
    chunk_len: usize,
) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for chunk in chunk_document(doc, chunk_len) {
        out.extend(index.retrieve_topk(&encoder.encode_chunk(&chunk), k)?);
    }
    Ok(out.into_iter().collect())
}

/// Fraction of gold (chunk, entity) pairs whose entity is in the chunk's
/// top-`k`. Returns 0 when there are no gold entities.
pub fn recall_at_k(encoder: &DualEncoder, index: &EntityIndex, examples: &[ChunkExample], k: usize) -> Result<f64> {
    Ok(recall_curve(encoder, index, examples, &[k])?[0])
}

/// Recall at each of `ks`, sharing one scoring pass per chunk.
pub fn recall_curve(
    encoder: &DualEncoder,
    index: &EntityIndex,
    examples: &[ChunkExample],
    ks: &[usize],
) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; ks.len()];
    let mut total = 0usize;
    for ex in examples {
        let scores = index.scores(&encoder.encode_chunk(&ex.chunk))?;
        for &g in &ex.gold {
            // zero-based rank under the same ordering as retrieve_topk
            let rank = (0..scores.len())
                .filter(|&j| scores[j] > scores[g] || (scores[j] == scores[g] && j < g))
                .count();
            total += 1;
            for (h, &k) in hits.iter_mut().zip(ks) {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| if total == 0 { 0.0 } else { h as f64 / total as f64 })
        .collect())
}
