use crate::markup::{Annotation, Document};

/// Propagates each annotation's entity to later exact (case-sensitive)
/// repetitions of its mention surface.
///
/// A repetition must be token aligned and must not overlap any annotation
/// already present, including ones added earlier in the same pass. Sources
/// are processed in document order, so the first annotated occurrence of a
/// surface wins conflicts. Original annotations are kept unchanged.
pub fn expand_coreference(doc: &Document, anns: &[Annotation]) -> Vec<Annotation> {
    let mut out: Vec<Annotation> = anns.to_vec();
    let mut sources = anns.to_vec();
    sources.sort();
    for src in &sources {
        let surface = doc.span_text(src.start, src.end);
        let width = src.end - src.start;
        let mut s = src.end;
        while s + width <= doc.len() {
            let e = s + width;
            if doc.span_text(s, e) == surface && !out.iter().any(|a| a.overlaps(s, e)) {
                out.push(Annotation::new(s, e, src.entity.clone()));
                s = e;
            } else {
                s += 1;
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{validate_annotations, RuleTokenizer};
    use proptest::prelude::*;

    fn doc(t: &str) -> Document {
        Document::new("d", t, &RuleTokenizer)
    }

    #[test]
    fn later_repetition_labeled() {
        let d = doc("Jobs founded X. Jobs retired.");
        let out = expand_coreference(&d, &[Annotation::new(0, 1, "Steve Jobs")]);
        assert_eq!(out, vec![Annotation::new(0, 1, "Steve Jobs"), Annotation::new(4, 5, "Steve Jobs")]);
    }

    #[test]
    fn no_repetition_is_identity() {
        let d = doc("Jobs founded X.");
        let anns = vec![Annotation::new(0, 1, "Steve Jobs")];
        assert_eq!(expand_coreference(&d, &anns), anns);
    }

    #[test]
    fn case_sensitive() {
        let d = doc("Apple and apple");
        let anns = vec![Annotation::new(0, 1, "Apple Inc.")];
        assert_eq!(expand_coreference(&d, &anns), anns);
    }

    #[test]
    fn overlap_guard() {
        let d = doc("York . New York");
        let anns = vec![Annotation::new(0, 1, "York"), Annotation::new(2, 4, "New York")];
        assert_eq!(expand_coreference(&d, &anns), anns);
    }

    proptest! {
        #[test]
        fn idempotent_and_valid(words in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..16),
                                picks in prop::collection::vec((0usize..16, 1usize..3), 0..4)) {
            let d = doc(&words.join(" "));
            let mut anns: Vec<Annotation> = Vec::new();
            for (i, (s, w)) in picks.into_iter().enumerate() {
                let e = s + w;
                if e <= d.len() && !anns.iter().any(|a| a.overlaps(s, e)) {
                    anns.push(Annotation::new(s, e, format!("E{i}")));
                }
            }
            anns.sort();
            let once = expand_coreference(&d, &anns);
            prop_assert!(validate_annotations(&d, &once).is_ok());
            for a in &anns {
                prop_assert!(once.contains(a));
            }
            prop_assert_eq!(expand_coreference(&d, &once), once);
        }
    }
}
