//! InKB micro-F1 and the forward-count/runtime benchmark.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{LinkResult, Linker};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::markup::{AnnotatedDocument, Annotation, Document};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub per_doc: Vec<DocScore>,
}

impl EvalReport {
    fn from_counts(tp: usize, fp: usize, fn_: usize, per_doc: Vec<DocScore>) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            per_doc,
        }
    }
}

/// Exact-match counts `(tp, fp, fn)` for one document. Duplicate
/// annotations count once.
pub fn score_document(pred: &[Annotation], gold: &[Annotation]) -> (usize, usize, usize) {
    let p: BTreeSet<&Annotation> = pred.iter().collect();
    let g: BTreeSet<&Annotation> = gold.iter().collect();
    let tp = p.intersection(&g).count();
    (tp, p.len() - tp, g.len() - tp)
}

/// Micro-averaged precision, recall and F1 over all documents. Only
/// mentions of knowledge-base entities are evaluated: annotations on either
/// side whose entity is missing from the knowledge base are dropped first. Documents are matched by id; a document present on only
/// one side is scored against an empty annotation list.
pub fn micro_f1_inkb(pred: &[AnnotatedDocument], gold: &[AnnotatedDocument], kb: &KnowledgeBase) -> EvalReport {
    let mut by_id: BTreeMap<&str, (Vec<Annotation>, Vec<Annotation>)> = BTreeMap::new();
    for d in pred {
        by_id
            .entry(&d.doc.doc_id)
            .or_default()
            .0
            .extend(d.annotations.iter().filter(|a| kb.contains(&a.entity)).cloned());
    }
    for d in gold {
        by_id
            .entry(&d.doc.doc_id)
            .or_default()
            .1
            .extend(d.annotations.iter().filter(|a| kb.contains(&a.entity)).cloned());
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut per_doc = Vec::with_capacity(by_id.len());
    for (id, (p, g)) in by_id {
        let (t, f, n) = score_document(&p, &g);
        tp += t;
        fp += f;
        fn_ += n;
        per_doc.push(DocScore {
            doc_id: id.to_string(),
            tp: t,
            fp: f,
            fn_: n,
        });
    }
    EvalReport::from_counts(tp, fp, fn_, per_doc)
}

/// Aggregate of repeated benchmark runs for one linker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: String,
    pub docs: usize,
    pub repeats: usize,
    /// Total scorer calls over the dataset, per repeat.
    pub lm_forwards: Vec<u64>,
    pub lm_forwards_mean: f64,
    pub lm_forwards_std: f64,
    pub runtime_ms_mean: f64,
    pub runtime_ms_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

/// Population mean and standard deviation by Welford's update, which keeps
/// the deviation of a constant series at exactly zero.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    (mean, (m2 / xs.len() as f64).sqrt())
}

/// Links the whole dataset `repeats` times, shuffling document order with
/// a seed derived from `seed` and the repeat index. Timing covers only the
/// linking calls. Standard deviations are population deviations.
pub fn benchmark(
    linker: &dyn Linker,
    dataset: &[AnnotatedDocument],
    kb: &KnowledgeBase,
    repeats: usize,
    seed: u64,
) -> Result<BenchRow> {
    benchmark_with(linker, dataset, kb, repeats, seed, &|l, docs| {
        docs.iter().map(|d| l.link(d)).collect()
    })
}

/// Links a batch of documents and returns results in input order.
pub type BatchRunner<'a> = dyn Fn(&dyn Linker, &[&Document]) -> Result<Vec<LinkResult>> + 'a;

/// Like [`benchmark`], with `run` linking each shuffled batch of documents.
/// `run` must return results in input order; it may link in parallel.
pub fn benchmark_with(
    linker: &dyn Linker,
    dataset: &[AnnotatedDocument],
    kb: &KnowledgeBase,
    repeats: usize,
    seed: u64,
    run: &BatchRunner<'_>,
) -> Result<BenchRow> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let mut forwards = Vec::with_capacity(repeats);
    let mut runtimes = Vec::with_capacity(repeats);
    let mut f1s = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64)));
        let docs: Vec<&Document> = order.iter().map(|&i| &dataset[i].doc).collect();
        let started = Instant::now();
        let results = run(linker, &docs)?;
        runtimes.push(started.elapsed().as_secs_f64() * 1e3);
        if results.len() != docs.len() {
            return Err(Error::InternalState(format!(
                "runner returned {} results for {} documents",
                results.len(),
                docs.len()
            )));
        }
        forwards.push(results.iter().map(|r| r.lm_forwards).sum());
        let preds: Vec<AnnotatedDocument> = docs
            .iter()
            .zip(results)
            .map(|(d, res)| AnnotatedDocument {
                doc: (*d).clone(),
                annotations: res.annotations,
            })
            .collect();
        f1s.push(micro_f1_inkb(&preds, dataset, kb).f1);
    }
    let (lm_forwards_mean, lm_forwards_std) = mean_std(&forwards.iter().map(|&x| x as f64).collect::<Vec<_>>());
    let (runtime_ms_mean, runtime_ms_std) = mean_std(&runtimes);
    let (f1_mean, f1_std) = mean_std(&f1s);
    Ok(BenchRow {
        mode: linker.name().to_string(),
        docs: dataset.len(),
        repeats,
        lm_forwards: forwards,
        lm_forwards_mean,
        lm_forwards_std,
        runtime_ms_mean,
        runtime_ms_std,
        f1_mean,
        f1_std,
    })
}

/// Fixed-width text table of benchmark rows.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>6} {:>8} {:>22} {:>22} {:>16}",
        "mode", "docs", "repeats", "lm_forwards", "runtime_ms", "f1"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>6} {:>8} {:>22} {:>22} {:>16}",
            r.mode,
            r.docs,
            r.repeats,
            format!("{:.1} ± {:.1}", r.lm_forwards_mean, r.lm_forwards_std),
            format!("{:.2} ± {:.2}", r.runtime_ms_mean, r.runtime_ms_std),
            format!("{:.4} ± {:.4}", r.f1_mean, r.f1_std),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::LinkResult;
    use crate::kb::EntityRecord;
    use crate::markup::{Document, RuleTokenizer};
    use proptest::prelude::*;

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert!((m - 5.0).abs() < 1e-12 && (s - 2.0).abs() < 1e-12);
        assert_eq!(mean_std(&[0.1; 10]), (0.1, 0.0));
        assert_eq!(mean_std(&[2.0 / 3.0; 7]).1, 0.0);
    }

    fn kb() -> KnowledgeBase {
        KnowledgeBase::build(["A", "B", "C"].map(|t| EntityRecord::new(t, ""))).unwrap()
    }

    fn ad(id: &str, anns: Vec<Annotation>) -> AnnotatedDocument {
        AnnotatedDocument {
            doc: Document::new(id, "w0 w1 w2 w3 w4 w5 w6 w7", &RuleTokenizer),
            annotations: anns,
        }
    }

    #[test]
    fn identical_is_perfect() {
        let g = vec![ad("d", vec![Annotation::new(0, 1, "A"), Annotation::new(2, 4, "B")])];
        let r = micro_f1_inkb(&g, &g, &kb());
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction() {
        let g = vec![ad("d", vec![Annotation::new(0, 1, "A")])];
        let p = vec![ad("d", vec![])];
        let r = micro_f1_inkb(&p, &g, &kb());
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = micro_f1_inkb(&p, &p, &kb());
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn half_right() {
        let g = vec![ad("d", vec![Annotation::new(0, 1, "A"), Annotation::new(2, 3, "B")])];
        let p = vec![ad("d", vec![Annotation::new(0, 1, "A"), Annotation::new(5, 6, "C")])];
        let r = micro_f1_inkb(&p, &g, &kb());
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
    }

    #[test]
    fn out_of_kb_gold_dropped() {
        let g = vec![ad("d", vec![Annotation::new(0, 1, "A"), Annotation::new(2, 3, "Nope")])];
        let p = vec![ad("d", vec![Annotation::new(0, 1, "A")])];
        assert_eq!(micro_f1_inkb(&p, &g, &kb()).f1, 1.0);
        // identical files stay perfect even with out-of-KB entities
        assert_eq!(micro_f1_inkb(&g, &g, &kb()).f1, 1.0);
    }

    fn anns() -> impl Strategy<Value = Vec<Annotation>> {
        prop::collection::vec((0usize..8, prop::sample::select(vec!["A", "B", "C"])), 0..6)
            .prop_map(|v| v.into_iter().map(|(s, e)| Annotation::new(s, s + 1, e)).collect())
    }

    proptest! {
        #[test]
        fn swap_symmetry(p in prop::collection::vec(anns(), 1..4), g in prop::collection::vec(anns(), 1..4)) {
            let pd: Vec<_> = p.into_iter().enumerate().map(|(i, a)| ad(&i.to_string(), a)).collect();
            let gd: Vec<_> = g.into_iter().enumerate().map(|(i, a)| ad(&i.to_string(), a)).collect();
            let a = micro_f1_inkb(&pd, &gd, &kb());
            let b = micro_f1_inkb(&gd, &pd, &kb());
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert_eq!(a.tp + a.fn_, gd.iter().map(|d| d.annotations.iter().collect::<BTreeSet<_>>().len()).sum::<usize>());
        }

        #[test]
        fn micro_equals_concatenation(p in prop::collection::vec(anns(), 1..4), g in prop::collection::vec(anns(), 1..4)) {
            let n = p.len().max(g.len());
            let get = |v: &Vec<Vec<Annotation>>, i: usize| v.get(i).cloned().unwrap_or_default();
            let pd: Vec<_> = (0..n).map(|i| ad(&i.to_string(), get(&p, i))).collect();
            let gd: Vec<_> = (0..n).map(|i| ad(&i.to_string(), get(&g, i))).collect();
            // concatenate by shifting each document into its own token range
            let shift = |docs: &[AnnotatedDocument]| -> Vec<Annotation> {
                docs.iter().enumerate().flat_map(|(i, d)| d.annotations.iter().map(move |a| Annotation::new(a.start + 100 * i, a.end + 100 * i, a.entity.clone()))).collect()
            };
            let (tp, fp, fn_) = score_document(&shift(&pd), &shift(&gd));
            let r = micro_f1_inkb(&pd, &gd, &kb());
            prop_assert_eq!((r.tp, r.fp, r.fn_), (tp, fp, fn_));
        }
    }

    struct Canned;

    impl Linker for Canned {
        fn name(&self) -> &str {
            "canned"
        }
        fn link(&self, doc: &Document) -> Result<LinkResult> {
            Ok(LinkResult {
                annotations: vec![Annotation::new(0, 1, "A")],
                lm_forwards: doc.len() as u64,
                wall_time: Default::default(),
                generated: String::new(),
                target: Vec::new(),
                score: None,
            })
        }
    }

    #[test]
    fn benchmark_single_doc_and_determinism() {
        let data = vec![ad("d", vec![Annotation::new(0, 1, "A")])];
        let row = benchmark(&Canned, &data, &kb(), 3, 7).unwrap();
        assert_eq!(row.lm_forwards, vec![8, 8, 8]);
        assert_eq!((row.lm_forwards_std, row.f1_mean, row.f1_std), (0.0, 1.0, 0.0));
        assert!(format_table(&[row]).contains("canned"));
        assert!(benchmark(&Canned, &data, &kb(), 0, 7).is_err());
    }
}
